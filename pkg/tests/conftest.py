import numpy as np
import pytest

from pathseg import PathSpec, SensorRun


@pytest.fixture
def tiny_path():
    return PathSpec("p_test", ("a", "b", "c"), ("f0", "f1"))


def build_run(run_id, values, labels, feature_names=("f0", "f1"), class_count=3, dt=1.0):
    """Run with integer-grid timestamps from a (k, n) value array (NaN = missing)."""
    values = np.asarray(values, dtype=np.float64)
    return SensorRun(
        run_id=run_id,
        timestamps=np.arange(values.shape[0]) * dt,
        values=values,
        labels=np.asarray(labels, dtype=np.int64),
        feature_names=tuple(feature_names),
        class_count=class_count,
    )


@pytest.fixture
def make_run():
    return build_run
