"""Markdown tables and scatter plots from a benchmark results CSV."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ConfigurationError

TABLES = (
    ("Accuracy", "accuracy", max),
    ("Loc-score", "loc_score", max),
    ("Memory footprint (bytes)", "memory_bytes", min),
    ("Inference latency (ms)", "latency_ms_mean", min),
    ("Inference throughput (predictions/ms)", "throughput_mean", max),
)

SCATTERS = (
    ("memory_vs_accuracy.svg", "memory_bytes", "accuracy", "Memory footprint (bytes)", "Accuracy"),
    ("latency_vs_accuracy.svg", "latency_ms_mean", "accuracy", "Inference latency (ms)", "Accuracy"),
    ("latency_vs_memory.svg", "memory_bytes", "latency_ms_mean", "Memory footprint (bytes)", "Inference latency (ms)"),
)


def _ordered_unique(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def _fmt(value: float, column: str) -> str:
    if column == "memory_bytes":
        return str(int(value))
    return f"{value:.4f}"


def markdown_tables(rows: list[dict]) -> str:
    """One pivoted table per metric, best value per path in bold."""
    if not rows:
        raise ConfigurationError("results CSV has no rows")
    models = _ordered_unique(r["model"] for r in rows)
    paths = _ordered_unique(r["path"] for r in rows)
    cell = {(r["path"], r["model"]): r for r in rows}
    out = ["# Benchmark report", ""]
    for title, column, best in TABLES:
        out.append(f"## {title}")
        out.append("")
        out.append("| Path | " + " | ".join(models) + " |")
        out.append("|" + "---|" * (len(models) + 1))
        for p in paths:
            present = [float(cell[(p, m)][column]) for m in models if (p, m) in cell]
            target = best(present) if present else None
            row = [p or "-"]
            for m in models:
                r = cell.get((p, m))
                if r is None:
                    row.append("-")
                    continue
                v = float(r[column])
                text = _fmt(v, column)
                row.append(f"**{text}**" if target is not None and v == target else text)
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    return "\n".join(out)


def scatter_svgs(rows: list[dict], out_dir: str | Path) -> list[Path]:
    """The three metric-vs-metric scatter plots, one point per model and path."""
    if not rows:
        raise ConfigurationError("results CSV has no rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _ordered_unique(r["path"] for r in rows)
    written = []
    for fname, xcol, ycol, xlabel, ylabel in SCATTERS:
        fig, ax = plt.subplots(figsize=(7, 5))
        for p in paths:
            sub = [r for r in rows if r["path"] == p]
            xs = [float(r[xcol]) for r in sub]
            ys = [float(r[ycol]) for r in sub]
            ax.scatter(xs, ys, label=p or "default", s=40)
            for r, x, y in zip(sub, xs, ys):
                ax.annotate(r["model"], (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if xcol in ("memory_bytes", "latency_ms_mean"):
            ax.set_xscale("log")
        ax.legend()
        fig.tight_layout()
        target = out_dir / fname
        fig.savefig(target, format="svg")
        plt.close(fig)
        written.append(target)
    return written


def write_report(rows: list[dict], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / "report.md"
    report.write_text(markdown_tables(rows), encoding="utf-8")
    scatter_svgs(rows, out_dir)
    return report
