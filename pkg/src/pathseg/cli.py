"""Command-line pipeline: generate -> train -> eval -> bench -> report.

Exit codes: 0 success, 2 configuration error, 3 numeric failure during
training, 4 I/O or shape error. All randomness in a stage derives from its
``--seed`` flag: the run split uses the seed itself, model training uses the
seed, and forest trees use seed + tree index.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from .errors import (
    ConfigurationError,
    DomainError,
    PathsegError,
    TrainingDivergenceError,
    WindowingError,
)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO_SHAPE = 4

MODEL_NAMES = ("dt", "rf", "mlp", "fcn", "cnn1d", "cnn2d", "lstm", "bilstm")

_thread_limiter = None


def _apply_thread_cap():
    global _thread_limiter
    cap = os.environ.get("PATHSEG_THREADS")
    if cap:
        from threadpoolctl import threadpool_limits

        _thread_limiter = threadpool_limits(limits=int(cap))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def cmd_generate(args) -> int:
    from .configio import PATH_SPEC_FILENAME, load_sim_config, save_path_spec
    from .dataset import save_run_csv
    from .simulate import generate_runs

    config, spec = load_sim_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = generate_runs(config, spec)
    files = []
    for run in runs:
        target = out / f"{run.run_id}.csv"
        save_run_csv(run, spec, target)
        files.append({"name": target.name, "rows": run.length, "sha256": _sha256(target)})
    save_path_spec(spec, out / PATH_SPEC_FILENAME)
    manifest = {
        "path_id": spec.path_id,
        "seed": config.seed,
        "n_runs": config.n_runs,
        "n_segments": config.n_segments,
        "feature_set": config.feature_set,
        "files": files,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(files)} runs + manifest to {out}")
    return 0


def _load_data(data_dir: str):
    from .configio import find_path_spec
    from .dataset import load_runs_csv

    spec = find_path_spec(data_dir)
    runs = load_runs_csv(data_dir, spec)
    return spec, runs


def cmd_train(args) -> int:
    import numpy as np

    from .dataset import split_runs
    from .envelope import save_model
    from .nn import NeuralNetClassifier
    from .preprocess import RunPreprocessor, make_windows, save_norm_params
    from .tree import DecisionTreeClassifier, RandomForestClassifier

    if args.model not in MODEL_NAMES:
        raise ConfigurationError(f"unknown model {args.model!r}; expected one of {MODEL_NAMES}")
    spec, runs = _load_data(args.data)
    train, val, test = split_runs(runs, seed=args.seed)
    pre = RunPreprocessor().fit(train)
    ds_train = make_windows(pre.transform(train), args.window)
    ds_val = make_windows(pre.transform(val), args.window) if val else None

    log_rows: list[dict]
    if args.model == "dt":
        model = DecisionTreeClassifier(max_depth=args.max_depth)
        model.fit(ds_train.windows, ds_train.labels, class_count=spec.n_segments)
        acc = float(np.mean(model.predict(ds_train.windows) == ds_train.labels))
        log_rows = [{"epoch": 0, "train_loss": "", "train_acc": acc, "val_acc": ""}]
    elif args.model == "rf":
        model = RandomForestClassifier(
            n_estimators=args.estimators, max_depth=args.max_depth, random_state=args.seed
        )
        model.fit(ds_train.windows, ds_train.labels, class_count=spec.n_segments)
        acc = float(np.mean(model.predict(ds_train.windows) == ds_train.labels))
        log_rows = [{"epoch": 0, "train_loss": "", "train_acc": acc, "val_acc": ""}]
    else:
        model = NeuralNetClassifier(
            architecture=args.model,
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            random_state=args.seed,
        )
        validation = (ds_val.windows, ds_val.labels) if ds_val is not None else None
        model.fit(ds_train.windows, ds_train.labels, class_count=spec.n_segments, validation=validation)
        log_rows = [
            {
                "epoch": e["epoch"],
                "train_loss": e["train_loss"],
                "train_acc": e["train_acc"],
                "val_acc": e.get("val_acc", ""),
            }
            for e in model.log_
        ]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    norm_name = out.name + ".norm"
    save_norm_params(pre.params_, out.parent / norm_name)
    save_model(
        model,
        out,
        model_name=args.model,
        j=args.window,
        n_features=spec.n_features,
        seed=args.seed,
        norm_params_ref=norm_name,
        splits={
            "train": [r.run_id for r in train],
            "val": [r.run_id for r in val],
            "test": [r.run_id for r in test],
        },
        segment_labels=list(spec.segment_labels),
    )
    # path_id travels in the envelope for the bench comparison table
    _amend_header(out, {"path_id": spec.path_id})
    with (out.parent / (out.name + ".log.csv")).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "train_acc", "val_acc"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(log_rows)
    print(f"trained {args.model} on {len(train)} runs -> {out}")
    return 0


def _amend_header(path: Path, extra: dict) -> None:
    from .envelope import MAGIC, read_envelope

    header, blob = read_envelope(path)
    header.update(extra)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(f"{MAGIC}\n".encode("ascii"))
        fh.write(f"{len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        fh.write(blob)


def cmd_eval(args) -> int:
    from .bench import prepare_model_dataset
    from .envelope import load_model
    from .metrics import accuracy_score, confusion_counts, loc_score, trace_from_windows

    loaded = load_model(args.model)
    spec, runs = _load_data(args.data)
    ds = prepare_model_dataset(loaded, args.model, runs, split=args.split)
    loaded.check_windows(ds.j, ds.n_features)
    pred = loaded.predict(ds.windows)
    trace = trace_from_windows(ds, pred)
    acc = accuracy_score(trace)
    loc = loc_score(trace, args.tau)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "path", "accuracy", "loc_score", "tau"])
        writer.writerow([loaded.model_name, spec.path_id, repr(acc), repr(loc), args.tau])
    mat = confusion_counts(trace, spec.n_segments)
    with (out.parent / (out.stem + ".confusion.csv")).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\pred", *spec.segment_labels])
        for i, label in enumerate(spec.segment_labels):
            writer.writerow([label, *mat[i].tolist()])
    print(f"{loaded.model_name}: accuracy={acc:.4f} loc_score={loc:.4f} (tau={args.tau})")
    return 0


def cmd_bench(args) -> int:
    from .bench import BenchProtocol, bench_suite, write_results_csv

    protocol = BenchProtocol(
        batch_size=args.batch, repetitions=args.reps, warmup_batches=args.warmup
    )
    models_dir = Path(args.models)
    model_files = sorted(models_dir.glob("*.model"))
    if not model_files:
        raise ConfigurationError(f"no *.model files in {models_dir}")
    spec, runs = _load_data(args.data)
    results, rows, skipped = bench_suite(model_files, runs, protocol, tau=args.tau, split=args.split)
    for file, reason in skipped:
        print(f"skipped {file}: {reason}", file=sys.stderr)
    if not rows:
        raise PathsegError("benchmark produced no results")
    out = Path(args.out) if args.out else models_dir / "bench_results.csv"
    write_results_csv(rows, out)
    print(f"benchmarked {len(rows)} models -> {out}")
    return 0


def cmd_report(args) -> int:
    from .bench import read_results_csv
    from .report import write_report

    rows = read_results_csv(args.results)
    if not rows:
        raise ConfigurationError(f"results CSV {args.results} is empty")
    report = write_report(rows, args.out)
    print(f"wrote {report} and scatter SVGs to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize run CSVs from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="split, preprocess, and fit one model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=30, help="window length j (samples)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-depth", type=int, default=14)
    p.add_argument("--estimators", type=int, default=25)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy / loc-score / confusion of a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=int, default=24)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="latency / throughput / memory suite over a models dir")
    p.add_argument("--models", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--batch", type=int, default=10_000,
                   help="timed batch size (the published protocol used 100000)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--tau", type=int, default=24)
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="markdown tables + scatter SVGs from bench results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, WindowingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PathsegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_SHAPE


if __name__ == "__main__":
    sys.exit(main())
