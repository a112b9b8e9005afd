"""Accuracy and loc-score over predictions aligned to run timelines.

Loc-score forgives confusions between the two segments adjacent to a label
transition, for predictions within ``tau`` samples of it. Transition windows
never cross run boundaries, and overlapping windows are unioned: a
prediction is correct if any covering window accepts it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WindowedDataset
from .errors import DomainError

DEFAULT_TAU = 24  # samples, about one second at the 24 Hz inertial rate


@dataclass(frozen=True)
class RunTrace:
    """Ordered (timestep, truth, prediction) triples for one run."""

    run_id: str
    timesteps: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timesteps, dtype=np.int64)
        yt = np.asarray(self.y_true, dtype=np.int64)
        yp = np.asarray(self.y_pred, dtype=np.int64)
        object.__setattr__(self, "timesteps", t)
        object.__setattr__(self, "y_true", yt)
        object.__setattr__(self, "y_pred", yp)
        if not (t.shape == yt.shape == yp.shape):
            raise DomainError("trace arrays must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DomainError(f"run {self.run_id!r}: trace timesteps must be strictly increasing")


@dataclass(frozen=True)
class PredictionTrace:
    runs: tuple[RunTrace, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(self.runs))
        if not self.runs or all(r.timesteps.size == 0 for r in self.runs):
            raise DomainError("prediction trace is empty")

    @property
    def total(self) -> int:
        return int(sum(r.timesteps.size for r in self.runs))


def trace_from_windows(dataset: WindowedDataset, y_pred) -> PredictionTrace:
    """Group per-window predictions back into per-run timelines."""
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_pred.shape[0] != len(dataset):
        raise DomainError(f"{y_pred.shape[0]} predictions for {len(dataset)} windows")
    runs = []
    for ri, run_id in enumerate(dataset.run_ids):
        mask = dataset.window_run_index == ri
        if not mask.any():
            continue
        order = np.argsort(dataset.window_end_index[mask], kind="stable")
        runs.append(
            RunTrace(
                run_id=run_id,
                timesteps=dataset.window_end_index[mask][order],
                y_true=dataset.labels[mask][order],
                y_pred=y_pred[mask][order],
            )
        )
    return PredictionTrace(tuple(runs))


def accuracy_score(trace: PredictionTrace) -> float:
    """Correct / total over all runs pooled."""
    correct = sum(int((r.y_pred == r.y_true).sum()) for r in trace.runs)
    return correct / trace.total


def loc_score(trace: PredictionTrace, tau: int = DEFAULT_TAU) -> float:
    """Accuracy that accepts either adjacent segment near each label transition.

    A transition happens at the timestep of the first sample carrying the new
    label; predictions with timesteps in [t_tr - tau, t_tr + tau] count as
    correct if they equal either the old or the new label.
    """
    if tau < 0:
        raise DomainError(f"tau must be non-negative, got {tau}")
    correct = 0
    for r in trace.runs:
        ok = r.y_pred == r.y_true
        change = np.flatnonzero(np.diff(r.y_true) != 0) + 1
        for idx in change:
            t_tr = r.timesteps[idx]
            old, new = r.y_true[idx - 1], r.y_true[idx]
            window = np.abs(r.timesteps - t_tr) <= tau
            ok[window] |= (r.y_pred[window] == old) | (r.y_pred[window] == new)
        correct += int(ok.sum())
    return correct / trace.total


def confusion_counts(trace: PredictionTrace, class_count: int) -> np.ndarray:
    """(l, l) matrix: entry (i, j) counts samples of true class i predicted as j."""
    mat = np.zeros((class_count, class_count), dtype=np.int64)
    for r in trace.runs:
        np.add.at(mat, (r.y_true, r.y_pred), 1)
    return mat
