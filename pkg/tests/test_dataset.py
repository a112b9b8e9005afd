import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathseg import PathSpec, load_run_csv, load_runs_csv, save_run_csv, split_runs
from pathseg.errors import ConfigurationError, IngestionError, SchemaError

from conftest import build_run


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestPathSpec:
    def test_valid(self, tiny_path):
        assert tiny_path.n_segments == 3
        assert tiny_path.n_features == 2
        assert tiny_path.label_index("b") == 1

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ConfigurationError):
            PathSpec("p", ("a", "a"), ("f0",))

    def test_single_segment_rejected(self):
        with pytest.raises(ConfigurationError):
            PathSpec("p", ("a",), ("f0",))

    def test_unknown_label_index(self, tiny_path):
        with pytest.raises(SchemaError):
            tiny_path.label_index("zzz")


class TestSensorRunInvariants:
    def test_non_monotonic_timestamps(self):
        with pytest.raises(IngestionError, match="strictly increasing"):
            build_run("r", [[1.0, 2.0]] * 3, [0, 0, 0], dt=-1.0)

    def test_length_mismatch(self, tiny_path):
        import pathseg

        with pytest.raises(IngestionError):
            pathseg.SensorRun(
                run_id="r",
                timestamps=np.arange(3.0),
                values=np.zeros((2, 2)),
                labels=np.zeros(3, dtype=np.int64),
                feature_names=("f0", "f1"),
                class_count=3,
            )

    def test_all_missing_column_rejected(self):
        vals = np.array([[np.nan, 1.0], [np.nan, 2.0]])
        with pytest.raises(IngestionError, match="f0"):
            build_run("r", vals, [0, 1])

    def test_label_out_of_range(self):
        with pytest.raises(IngestionError):
            build_run("r", [[0.0, 0.0]], [5], class_count=3)

    def test_immutable_after_construction(self):
        run = build_run("r", [[0.0, 1.0], [2.0, 3.0]], [0, 1])
        with pytest.raises(ValueError):
            run.values[0, 0] = 9.0


class TestLoadRunsCsv:
    def test_empty_cell_becomes_missing(self, tmp_path, tiny_path):
        # 2-row csv with an empty f0 cell in the first row
        write_csv(tmp_path / "r0.csv", ["timestamp,f0,f1,label", "0.0,,1.5,a", "1.0,2.5,3.5,b"])
        run = load_run_csv(tmp_path / "r0.csv", tiny_path)
        assert np.isnan(run.values[0, 0])
        assert run.values[1, 0] == 2.5
        assert list(run.labels) == [0, 1]

    def test_unknown_label_is_schema_error(self, tmp_path, tiny_path):
        write_csv(tmp_path / "bad.csv", ["timestamp,f0,f1,label", "0.0,1,2,seg_99"])
        with pytest.raises(SchemaError, match=r"bad\.csv.*seg_99"):
            load_run_csv(tmp_path / "bad.csv", tiny_path)

    def test_non_monotonic_timestamps_is_ingestion_error(self, tmp_path, tiny_path):
        write_csv(tmp_path / "r.csv", ["timestamp,f0,f1,label", "1.0,1,2,a", "0.5,1,2,a"])
        with pytest.raises(IngestionError):
            load_run_csv(tmp_path / "r.csv", tiny_path)

    def test_column_count_mismatch_is_schema_error(self, tmp_path, tiny_path):
        write_csv(tmp_path / "r.csv", ["timestamp,f0,label", "0.0,1,a"])
        with pytest.raises(SchemaError):
            load_run_csv(tmp_path / "r.csv", tiny_path)

    def test_run_lengths_match_line_counts(self, tmp_path, tiny_path):
        # oracle: row count of each file, counted independently of the parser
        rng = np.random.default_rng(0)
        for name, k in [("a", 100), ("b", 120), ("c", 90)]:
            labels = rng.integers(0, 3, size=k)
            run = build_run(name, rng.normal(size=(k, 2)), labels)
            save_run_csv(run, tiny_path, tmp_path / f"{name}.csv")
        expected = {
            p.stem: sum(1 for _ in p.open()) - 1 for p in tmp_path.glob("*.csv")
        }
        runs = load_runs_csv(tmp_path, tiny_path)
        assert sorted(r.length for r in runs) == sorted(expected.values()) == [90, 100, 120]


class TestRoundTrip:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_csv_round_trip_exact(self, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 40))
        vals = rng.normal(size=(k, 2)) * rng.uniform(0.01, 1e6)
        mask = rng.random((k, 2)) < 0.3
        mask[rng.integers(0, k)] = False  # keep at least one recorded value per column
        vals[mask] = np.nan
        run = build_run("rt", vals, rng.integers(0, 3, size=k))
        spec = PathSpec("p", ("a", "b", "c"), ("f0", "f1"))
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "rt.csv"
            save_run_csv(run, spec, target)
            back = load_run_csv(target, spec)
        assert np.array_equal(run.values, back.values, equal_nan=True)
        assert np.array_equal(run.timestamps, back.timestamps)
        assert np.array_equal(run.labels, back.labels)


def _runs(n):
    return [build_run(f"r{i}", [[0.0, 0.0], [1.0, 1.0]], [0, 1]) for i in range(n)]


class TestSplitRuns:
    def test_ten_runs_default_fractions(self):
        train, val, test = split_runs(_runs(10), (0.7, 0.15, 0.15), seed=7)
        sizes = (len(train), len(val), len(test))
        assert sizes[0] == 7 and sorted(sizes[1:]) == [1, 2]
        ids = [r.run_id for r in train + val + test]
        assert sorted(ids) == sorted(f"r{i}" for i in range(10))
        assert len(set(ids)) == 10

    def test_three_runs_thirds(self):
        train, val, test = split_runs(_runs(3), (1 / 3, 1 / 3, 1 / 3), seed=0)
        assert (len(train), len(val), len(test)) == (1, 1, 1)

    def test_deterministic_for_seed(self):
        a = split_runs(_runs(10), (0.7, 0.15, 0.15), seed=123)
        b = split_runs(_runs(10), (0.7, 0.15, 0.15), seed=123)
        assert [[r.run_id for r in part] for part in a] == [[r.run_id for r in part] for part in b]

    @given(st.integers(0, 10_000), st.integers(4, 25))
    @settings(max_examples=50, deadline=None)
    def test_partition_property(self, seed, n):
        train, val, test = split_runs(_runs(n), (0.7, 0.15, 0.15), seed=seed)
        ids = [r.run_id for r in train] + [r.run_id for r in val] + [r.run_id for r in test]
        assert len(ids) == n and len(set(ids)) == n
        assert len(train) >= 1 and len(val) >= 1 and len(test) >= 1

    def test_bad_fraction_sum(self):
        with pytest.raises(ConfigurationError):
            split_runs(_runs(5), (0.5, 0.3, 0.3), seed=0)

    def test_too_few_runs(self):
        with pytest.raises(ConfigurationError):
            split_runs(_runs(2), (0.7, 0.15, 0.15), seed=0)
