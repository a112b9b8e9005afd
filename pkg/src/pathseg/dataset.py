"""Core data objects: labeled paths, raw sensor runs, and windowed tensors.

A *path* is an ordered list of labeled segments. A *run* is one traversal of
the path: a timestamped multivariate series (possibly with missing cells)
plus a per-sample segment label. Windowing turns dense runs into fixed-size
training tensors.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError, SchemaError

IMU_FEATURES = (
    "acc_x", "acc_y", "acc_z",
    "gyro_x", "gyro_y", "gyro_z",
    "mag_x", "mag_y", "mag_z",
)
AMBIENT_FEATURES = (
    "temperature", "humidity", "pressure",
    "spectral_yellow", "spectral_green", "spectral_blue",
    "spectral_indigo", "spectral_violet",
)
FULL_FEATURES = IMU_FEATURES + AMBIENT_FEATURES

FEATURE_SETS = {"full_17": FULL_FEATURES, "imu_9": IMU_FEATURES}


@dataclass(frozen=True)
class PathSpec:
    """A known path: ordered segment labels plus the feature space recorded on it."""

    path_id: str
    segment_labels: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "segment_labels", tuple(self.segment_labels))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.segment_labels) < 2:
            raise ConfigurationError(
                f"path {self.path_id!r}: needs at least 2 segment labels, got {len(self.segment_labels)}"
            )
        if len(set(self.segment_labels)) != len(self.segment_labels):
            raise ConfigurationError(f"path {self.path_id!r}: segment labels must be unique")
        if len(self.feature_names) < 1:
            raise ConfigurationError(f"path {self.path_id!r}: needs at least one feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ConfigurationError(f"path {self.path_id!r}: feature names must be unique")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_segments(self) -> int:
        return len(self.segment_labels)

    def label_index(self, name: str) -> int:
        try:
            return self.segment_labels.index(name)
        except ValueError:
            raise SchemaError(f"label {name!r} is not a segment of path {self.path_id!r}") from None


@dataclass(frozen=True)
class SensorRun:
    """One traversal of a path.

    ``values`` is a (k, n) float array with NaN marking missing measurements;
    ``labels`` holds segment indices into the owning path's label list.
    Instances are immutable after construction.
    """

    run_id: str
    timestamps: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    class_count: int

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        k = ts.shape[0]
        if vals.ndim != 2 or vals.shape[0] != k or labs.shape[0] != k:
            raise IngestionError(
                f"run {self.run_id!r}: timestamps/values/labels lengths disagree "
                f"({k}, {vals.shape}, {labs.shape[0]})"
            )
        if vals.shape[1] != len(self.feature_names):
            raise IngestionError(
                f"run {self.run_id!r}: {vals.shape[1]} columns vs {len(self.feature_names)} feature names"
            )
        if k == 0:
            raise IngestionError(f"run {self.run_id!r} is empty")
        if np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0)) + 1
            raise IngestionError(f"run {self.run_id!r}: timestamps not strictly increasing at row {bad}")
        if labs.min() < 0 or labs.max() >= self.class_count:
            raise IngestionError(f"run {self.run_id!r}: label index outside [0, {self.class_count})")
        dead = np.where(np.all(np.isnan(vals), axis=0))[0]
        if dead.size:
            raise IngestionError(
                f"run {self.run_id!r}: column {self.feature_names[dead[0]]!r} has no recorded values"
            )
        for arr in (ts, vals, labs):
            arr.setflags(write=False)

    @property
    def length(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def is_dense(self) -> bool:
        return not np.any(np.isnan(self.values))


@dataclass(frozen=True)
class WindowedDataset:
    """Dense windowed tensors: ``windows`` is (num_windows, j, n), one label per window.

    ``window_run_index`` / ``window_end_index`` record which run each window
    came from and the in-run index of its last sample, so predictions can be
    re-aligned to run timelines.
    """

    windows: np.ndarray
    labels: np.ndarray
    j: int
    n_features: int
    class_count: int
    run_ids: tuple[str, ...] = ()
    window_run_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    window_end_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "labels", labs)
        if w.ndim != 3 or w.shape[1] != self.j or w.shape[2] != self.n_features:
            raise IngestionError(f"windows shape {w.shape} does not match (n, {self.j}, {self.n_features})")
        if labs.shape[0] != w.shape[0]:
            raise IngestionError("one label per window required")
        if not np.all(np.isfinite(w)):
            raise IngestionError("windows contain non-finite values")
        if labs.size and (labs.min() < 0 or labs.max() >= self.class_count):
            raise IngestionError(f"window label outside [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.windows.shape[0])

    @property
    def flat(self) -> np.ndarray:
        """Windows flattened to (num_windows, j * n) for flat-input models."""
        return self.windows.reshape(len(self), self.j * self.n_features)


def _format_cell(x: float) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def save_run_csv(run: SensorRun, spec: PathSpec, path: str | Path) -> None:
    """Write one run in the interchange CSV format (empty cell = missing)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *spec.feature_names, "label"])
        for i in range(run.length):
            row = [repr(float(run.timestamps[i]))]
            row.extend(_format_cell(v) for v in run.values[i])
            row.append(spec.segment_labels[run.labels[i]])
            writer.writerow(row)


def load_run_csv(path: str | Path, spec: PathSpec) -> SensorRun:
    """Parse a single run CSV against ``spec``; empty cells become NaN."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: empty file") from None
        expected = ["timestamp", *spec.feature_names, "label"]
        if len(header) != len(expected):
            raise SchemaError(
                f"{path.name}: {len(header)} columns, expected {len(expected)} "
                f"(timestamp + {spec.n_features} features + label)"
            )
        if header != expected:
            raise SchemaError(f"{path.name}: header {header} does not match {expected}")
        label_to_index = {name: i for i, name in enumerate(spec.segment_labels)}
        timestamps: list[float] = []
        values: list[list[float]] = []
        labels: list[int] = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise SchemaError(f"{path.name} row {rownum}: {len(row)} cells, expected {len(expected)}")
            timestamps.append(float(row[0]))
            values.append([float(c) if c != "" else math.nan for c in row[1:-1]])
            if row[-1] not in label_to_index:
                raise SchemaError(f"{path.name} row {rownum}: unknown label {row[-1]!r}")
            labels.append(label_to_index[row[-1]])
    return SensorRun(
        run_id=path.stem,
        timestamps=np.array(timestamps),
        values=np.array(values, dtype=np.float64).reshape(len(timestamps), spec.n_features),
        labels=np.array(labels),
        feature_names=spec.feature_names,
        class_count=spec.n_segments,
    )


def load_runs_csv(directory: str | Path, spec: PathSpec) -> list[SensorRun]:
    """Load every ``*.csv`` run file in ``directory``, sorted by file name."""
    directory = Path(directory)
    files = sorted(p for p in directory.glob("*.csv"))
    if not files:
        raise IngestionError(f"no run CSVs found in {directory}")
    return [load_run_csv(p, spec) for p in files]


def split_runs(
    runs: list[SensorRun],
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> tuple[list[SensorRun], list[SensorRun], list[SensorRun]]:
    """Partition whole runs into train/val/test.

    Runs are shuffled with a seeded RNG and cut at boundaries obtained by
    rounding the cumulative fractions, so the same seed always yields the
    same assignment and no run (hence no window) appears in two splits.
    """
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3 or any(f < 0 for f in fracs):
        raise ConfigurationError(f"fractions must be three non-negative numbers, got {fractions}")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions must sum to 1, got {sum(fracs)!r}")
    n = len(runs)
    n_nonempty = sum(1 for f in fracs if f > 0)
    if n < 3 or n < n_nonempty:
        raise ConfigurationError(f"need at least {max(3, n_nonempty)} runs to split, got {n}")

    order = np.random.default_rng(seed).permutation(n)
    b1 = round(n * fracs[0])
    b2 = round(n * (fracs[0] + fracs[1]))
    sizes = [b1, b2 - b1, n - b2]
    # rounding must not starve a split whose fraction is positive
    for i in range(3):
        while fracs[i] > 0 and sizes[i] == 0:
            donor = int(np.argmax(sizes))
            sizes[donor] -= 1
            sizes[i] += 1
    cut1, cut2 = sizes[0], sizes[0] + sizes[1]
    train = [runs[i] for i in sorted(order[:cut1])]
    val = [runs[i] for i in sorted(order[cut1:cut2])]
    test = [runs[i] for i in sorted(order[cut2:])]
    return train, val, test
