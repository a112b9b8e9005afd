"""Cleaning chain for raw runs: gap filling, per-column rolling mean, min-max
scaling, feature selection, and sliding-window extraction.

The rolling filter width for each column is one more than the longest gap
seen in that column on the *training* runs, the smallest width guaranteed to
straddle every gap. Scaling statistics likewise come from the training split
only and travel with the trained model.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dataset import SensorRun, WindowedDataset
from .errors import ConfigurationError, PreprocessingError, SchemaError, ShapeError, WindowingError


def fill_missing(column, name: str = "column") -> np.ndarray:
    """Fill gaps in two stages: propagate the last recorded value forward,
    then pad any remaining leading gap with the earliest recorded value."""
    col = np.asarray(column, dtype=np.float64).copy()
    recorded = ~np.isnan(col)
    if not recorded.any():
        raise PreprocessingError(f"{name} has no recorded values to fill from")
    idx = np.where(recorded, np.arange(col.size), 0)
    np.maximum.accumulate(idx, out=idx)
    out = col[idx]
    first = int(np.argmax(recorded))
    out[:first] = col[first]
    return out


def max_gap(column) -> int:
    """Length of the longest run of consecutive missing entries (0 if dense)."""
    missing = np.isnan(np.asarray(column, dtype=np.float64))
    if not missing.any():
        return 0
    padded = np.concatenate(([False], missing, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[::2], edges[1::2]
    return int((ends - starts).max())


def rolling_mean(column, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` samples, partial at the start."""
    if window < 1:
        raise ConfigurationError(f"rolling window must be >= 1, got {window}")
    col = np.asarray(column, dtype=np.float64)
    if window == 1:
        return col.copy()
    csum = np.concatenate(([0.0], np.cumsum(col)))
    n = col.size
    counts = np.minimum(np.arange(1, n + 1), window)
    lo = np.maximum(np.arange(1, n + 1) - window, 0)
    return (csum[1:] - csum[lo]) / counts


@dataclass(frozen=True)
class NormParams:
    """Per-feature scaling and smoothing parameters fitted on training data."""

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    smooth_windows: np.ndarray

    def __post_init__(self):
        n = len(self.feature_names)
        if not (self.mins.shape == self.maxs.shape == self.smooth_windows.shape == (n,)):
            raise ShapeError("NormParams arrays must be one entry per feature")


def minmax_fit(columns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (min, max) of a dense matrix."""
    mat = np.asarray(columns, dtype=np.float64)
    if np.isnan(mat).any():
        raise PreprocessingError("min-max fit input must be dense")
    return mat.min(axis=0), mat.max(axis=0)


def minmax_apply(columns: np.ndarray, mins: np.ndarray, maxs: np.ndarray) -> np.ndarray:
    """Map x to (x - min) / (max - min) per column; a degenerate column maps to 0.

    Values outside the fitted range scale past [0, 1] unclamped.
    """
    mat = np.asarray(columns, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[:, None]
    if mat.shape[1] != mins.shape[0]:
        raise ShapeError(f"{mat.shape[1]} columns but params carry {mins.shape[0]}")
    span = maxs - mins
    out = np.zeros_like(mat)
    ok = span > 0
    out[:, ok] = (mat[:, ok] - mins[ok]) / span[ok]
    return out


def select_features(run: SensorRun, keep) -> SensorRun:
    """Column-subset of a run, in ``keep`` order."""
    keep = list(keep)
    positions = []
    for name in keep:
        if name not in run.feature_names:
            raise ConfigurationError(f"unknown feature {name!r} (run {run.run_id!r})")
        positions.append(run.feature_names.index(name))
    return SensorRun(
        run_id=run.run_id,
        timestamps=run.timestamps,
        values=run.values[:, positions],
        labels=run.labels,
        feature_names=tuple(keep),
        class_count=run.class_count,
    )


def make_windows(runs: list[SensorRun], j: int) -> WindowedDataset:
    """Stride-1 windows of length ``j`` within each run, labeled at the last timestep."""
    if j < 1:
        raise ConfigurationError(f"window length must be >= 1, got {j}")
    if not runs:
        raise WindowingError("no runs to window")
    n = runs[0].n_features
    class_count = runs[0].class_count
    chunks, label_chunks, run_idx_chunks, end_idx_chunks = [], [], [], []
    for ri, run in enumerate(runs):
        if run.n_features != n or run.class_count != class_count:
            raise ShapeError(f"run {run.run_id!r} does not match the first run's shape")
        if not run.is_dense():
            raise PreprocessingError(f"run {run.run_id!r} still has missing values; fill before windowing")
        k = run.length
        if k < j:
            raise WindowingError(f"run {run.run_id!r} has {k} samples, shorter than window {j}")
        wins = np.lib.stride_tricks.sliding_window_view(run.values, j, axis=0)
        chunks.append(np.ascontiguousarray(np.swapaxes(wins, 1, 2)))
        label_chunks.append(run.labels[j - 1:])
        run_idx_chunks.append(np.full(k - j + 1, ri, dtype=np.int64))
        end_idx_chunks.append(np.arange(j - 1, k, dtype=np.int64))
    return WindowedDataset(
        windows=np.concatenate(chunks, axis=0),
        labels=np.concatenate(label_chunks),
        j=j,
        n_features=n,
        class_count=class_count,
        run_ids=tuple(r.run_id for r in runs),
        window_run_index=np.concatenate(run_idx_chunks),
        window_end_index=np.concatenate(end_idx_chunks),
    )


class RunPreprocessor(BaseEstimator, TransformerMixin):
    """Fits the fill/smooth/scale chain on training runs and applies it to any run.

    Parameters
    ----------
    smoothing_margin : int
        Added to each column's longest training gap to get its filter width.
    """

    def __init__(self, smoothing_margin: int = 1):
        self.smoothing_margin = smoothing_margin

    def fit(self, runs: list[SensorRun], y=None):
        if not runs:
            raise ConfigurationError("cannot fit preprocessor on zero runs")
        names = runs[0].feature_names
        n = len(names)
        gaps = np.zeros(n, dtype=np.int64)
        for run in runs:
            if run.feature_names != names:
                raise ShapeError(f"run {run.run_id!r} feature names differ from the first run")
            for f in range(n):
                gaps[f] = max(gaps[f], max_gap(run.values[:, f]))
        windows = gaps + self.smoothing_margin
        smoothed = [self._fill_and_smooth(run, windows) for run in runs]
        mins, maxs = minmax_fit(np.concatenate(smoothed, axis=0))
        self.params_ = NormParams(
            feature_names=names,
            mins=mins,
            maxs=maxs,
            smooth_windows=windows,
        )
        return self

    @classmethod
    def from_params(cls, params: NormParams) -> "RunPreprocessor":
        pre = cls()
        pre.params_ = params
        return pre

    def _fill_and_smooth(self, run: SensorRun, windows) -> np.ndarray:
        out = np.empty_like(run.values)
        for f in range(run.n_features):
            filled = fill_missing(run.values[:, f], name=f"column {run.feature_names[f]!r} of run {run.run_id!r}")
            out[:, f] = rolling_mean(filled, int(windows[f]))
        return out

    def transform(self, runs: list[SensorRun]) -> list[SensorRun]:
        if not hasattr(self, "params_"):
            raise NotFittedError("RunPreprocessor must be fitted (or built from params) before transform")
        p = self.params_
        out = []
        for run in runs:
            if run.feature_names != p.feature_names:
                raise ShapeError(f"run {run.run_id!r} features do not match fitted preprocessor")
            cleaned = self._fill_and_smooth(run, p.smooth_windows)
            scaled = minmax_apply(cleaned, p.mins, p.maxs)
            out.append(
                SensorRun(
                    run_id=run.run_id,
                    timestamps=run.timestamps,
                    values=scaled,
                    labels=run.labels,
                    feature_names=run.feature_names,
                    class_count=run.class_count,
                )
            )
        return out


NORM_MAGIC = "pathseg-norm v1"


def save_norm_params(params: NormParams, path: str | Path) -> None:
    lines = [NORM_MAGIC, "feature\tmin\tmax\twindow"]
    for i, name in enumerate(params.feature_names):
        lines.append(
            f"{name}\t{float(params.mins[i])!r}\t{float(params.maxs[i])!r}\t{int(params.smooth_windows[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_norm_params(path: str | Path) -> NormParams:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != NORM_MAGIC:
        raise SchemaError(f"{path}: not a {NORM_MAGIC} file")
    names, mins, maxs, windows = [], [], [], []
    for line in text[2:]:
        if not line.strip():
            continue
        name, lo, hi, win = line.split("\t")
        names.append(name)
        mins.append(float(lo))
        maxs.append(float(hi))
        windows.append(int(win))
    return NormParams(
        feature_names=tuple(names),
        mins=np.array(mins),
        maxs=np.array(maxs),
        smooth_windows=np.array(windows, dtype=np.int64),
    )
