"""Measurement protocol for memory footprint, inference latency, and throughput.

Latency and throughput come from the same repeated timed passes over one
fixed batch, on a monotonic clock, after untimed warmup passes, with BLAS
pinned to a single thread for the timed region. Memory footprint is the
serialized envelope size, a pure function of the model file.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import SensorRun
from .envelope import LoadedModel, load_model, read_envelope
from .errors import ConfigurationError, PathsegError, ShapeError
from .metrics import accuracy_score, loc_score, trace_from_windows
from .preprocess import RunPreprocessor, load_norm_params, make_windows

CSV_COLUMNS = (
    "model", "path", "accuracy", "loc_score", "memory_bytes",
    "latency_ms_mean", "latency_ms_std", "throughput_mean", "throughput_std",
)


@dataclass(frozen=True)
class BenchProtocol:
    batch_size: int = 10_000
    repetitions: int = 10
    warmup_batches: int = 3
    single_threaded: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.repetitions < 2:
            raise ConfigurationError(f"repetitions must be >= 2 for a defined std, got {self.repetitions}")
        if self.warmup_batches < 0:
            raise ConfigurationError(f"warmup_batches must be >= 0, got {self.warmup_batches}")


@dataclass(frozen=True)
class BenchResult:
    model_id: str
    path_id: str
    latency_ms_mean: float
    latency_ms_std: float
    throughput_per_ms_mean: float
    throughput_per_ms_std: float
    memory_bytes: int
    pass_latencies_ms: tuple[float, ...]
    pass_throughputs: tuple[float, ...]


def memory_footprint(model_file: str | Path) -> int:
    """Size in bytes of the serialized envelope (structure plus weights)."""
    read_envelope(model_file)  # validate before trusting the size
    return Path(model_file).stat().st_size


def tile_batch(windows: np.ndarray, batch_size: int) -> np.ndarray:
    """Repeat windows until the batch has exactly ``batch_size`` rows."""
    if len(windows) == 0:
        raise ConfigurationError("cannot build a benchmark batch from zero windows")
    reps = -(-batch_size // len(windows))
    if reps == 1:
        return windows[:batch_size]
    return np.concatenate([windows] * reps, axis=0)[:batch_size]


def measure_latency(
    model,
    windows: np.ndarray,
    protocol: BenchProtocol,
    model_file: str | Path | None = None,
    model_id: str = "",
    path_id: str = "",
) -> BenchResult:
    """Timed full-batch prediction passes; per-pass latency is elapsed/batch_size."""
    if len(windows) != protocol.batch_size:
        raise ConfigurationError(
            f"batch carries {len(windows)} windows but the protocol says {protocol.batch_size}"
        )
    limit = 1 if protocol.single_threaded else None
    try:
        ctx = threadpool_limits(limits=limit)
    except Exception as exc:  # cannot pin: refuse to produce numbers
        raise ConfigurationError(f"cannot pin timed section to one worker: {exc}") from exc
    lat_ms, thr = [], []
    with ctx:
        for _ in range(protocol.warmup_batches):
            model.predict(windows)
        for _ in range(protocol.repetitions):
            t0 = time.perf_counter()
            model.predict(windows)
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            lat_ms.append(elapsed_ms / protocol.batch_size)
            thr.append(protocol.batch_size / elapsed_ms)
    lat = np.array(lat_ms)
    th = np.array(thr)
    return BenchResult(
        model_id=model_id,
        path_id=path_id,
        latency_ms_mean=float(lat.mean()),
        latency_ms_std=float(lat.std(ddof=1)),
        throughput_per_ms_mean=float(th.mean()),
        throughput_per_ms_std=float(th.std(ddof=1)),
        memory_bytes=memory_footprint(model_file) if model_file is not None else 0,
        pass_latencies_ms=tuple(lat_ms),
        pass_throughputs=tuple(thr),
    )


def _eval_runs_for(loaded: LoadedModel, runs: list[SensorRun], split: str) -> list[SensorRun]:
    splits = loaded.header.get("splits") or {}
    wanted = splits.get(split)
    if not wanted:
        return list(runs)
    by_id = {r.run_id: r for r in runs}
    selected = [by_id[rid] for rid in wanted if rid in by_id]
    return selected or list(runs)


def prepare_model_dataset(loaded: LoadedModel, model_file: str | Path, runs: list[SensorRun], split: str = "test"):
    """Preprocess raw runs with the model's own stored parameters and window them."""
    eval_runs = _eval_runs_for(loaded, runs, split)
    norm_ref = loaded.header.get("norm_params")
    if norm_ref:
        params = load_norm_params(Path(model_file).parent / norm_ref)
        eval_runs = RunPreprocessor.from_params(params).transform(eval_runs)
    return make_windows(eval_runs, loaded.j)


def bench_suite(
    model_files: list[str | Path],
    runs: list[SensorRun],
    protocol: BenchProtocol,
    tau: int = 24,
    split: str = "test",
) -> tuple[list[BenchResult], list[dict], list[tuple[str, str]]]:
    """Bench every model against the same raw runs.

    Returns (results, comparison rows, skipped) where ``skipped`` records
    (file, reason) for models whose shapes did not fit the data.
    """
    results: list[BenchResult] = []
    rows: list[dict] = []
    skipped: list[tuple[str, str]] = []
    for file in model_files:
        try:
            loaded = load_model(file)
            ds = prepare_model_dataset(loaded, file, runs, split)
            loaded.check_windows(ds.j, ds.n_features)
            pred = loaded.predict(ds.windows)
            trace = trace_from_windows(ds, pred)
            acc = accuracy_score(trace)
            loc = loc_score(trace, tau)
            batch = tile_batch(ds.windows, protocol.batch_size)
            res = measure_latency(
                loaded, batch, protocol,
                model_file=file,
                model_id=loaded.model_name,
                path_id=loaded.header.get("path_id") or "",
            )
            results.append(res)
            rows.append({
                "model": loaded.model_name,
                "path": loaded.header.get("path_id") or "",
                "accuracy": acc,
                "loc_score": loc,
                "memory_bytes": res.memory_bytes,
                "latency_ms_mean": res.latency_ms_mean,
                "latency_ms_std": res.latency_ms_std,
                "throughput_mean": res.throughput_per_ms_mean,
                "throughput_std": res.throughput_per_ms_std,
            })
        except (PathsegError, ShapeError) as exc:
            skipped.append((str(file), str(exc)))
    return results, rows, skipped


def write_results_csv(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def read_results_csv(path: str | Path) -> list[dict]:
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
