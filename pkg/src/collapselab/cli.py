"""Command-line front end.

Four subcommands:

  train    run one experiment from a config file
  metrics  recompute the collapse report from exported features/weights
  etf      print (and optionally export) a simplex frame and its deviation
  sweep    train once per value of gamma, alpha, or beta and tabulate

Exit code 0 on success, 2 on any reported package error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import parse_config_file, with_overrides
from .data import read_numeric_csv
from .errors import CollapseLabError, ParseError
from .etf import etf_deviation, make_etf
from .harness import (
    _fmt,
    emit_outputs,
    run_train,
    sweep,
    write_sweep_csv,
    _write_matrix_csv,
)
from .ncmetrics import nc_report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapselab",
        description="Desk-scale experiments on neural collapse under class imbalance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one experiment from a config file")
    p_train.add_argument("--config", required=True, help="flat key=value config file")
    p_train.add_argument("--mode", choices=["allnc", "ce"], help="override the config's mode")
    p_train.add_argument("--seed", type=int, help="override the config's seed")
    p_train.add_argument("--out", help="override the config's output directory")

    p_metrics = sub.add_parser("metrics", help="collapse report from exported arrays")
    p_metrics.add_argument("--features", required=True, help="CSV of feature rows + label column")
    p_metrics.add_argument("--weights", required=True, help="CSV of classifier rows (+ bias column)")
    p_metrics.add_argument("--bias", help="separate one-column bias CSV")
    p_metrics.add_argument("--out", required=True, help="directory for report.json and angle CSVs")

    p_etf = sub.add_parser("etf", help="construct a simplex frame and check it")
    p_etf.add_argument("--dim", type=int, required=True, help="ambient dimension")
    p_etf.add_argument("--classes", type=int, required=True, help="number of frame vectors")
    p_etf.add_argument("--seed", type=int, default=0, help="rotation seed")
    p_etf.add_argument("--csv", help="optional path for the frame, one vector per row")

    p_sweep = sub.add_parser("sweep", help="train once per parameter value")
    p_sweep.add_argument("--config", required=True, help="flat key=value config file")
    p_sweep.add_argument("--param", required=True, choices=["gamma", "alpha", "beta"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", help="output CSV path (default: sweep_<param>.csv)")

    return parser


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = parse_config_file(args.config)
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = with_overrides(cfg, **overrides)
    result = run_train(cfg, emit=False)
    if cfg.out_dir:
        emit_outputs(result, cfg.out_dir)
    if not result.logs:
        print("diverged before completing the first epoch", file=sys.stderr)
        return 2
    last = result.logs[-1]
    status = "diverged" if result.diverged else "ok"
    print(
        f"{status}: {len(result.logs)} epochs, "
        f"acc {_fmt(last.accuracy.overall)} "
        f"(many {_fmt(last.accuracy.many)}, medium {_fmt(last.accuracy.medium)}, "
        f"few {_fmt(last.accuracy.few)}), "
        f"std_cos_mu {_fmt(last.report.std_cos_mu)}, delta {_fmt(last.report.delta)}"
    )
    if cfg.out_dir:
        print(f"artifacts: {Path(cfg.out_dir).resolve()}")
    return 2 if result.diverged else 0


def _load_weights(weights_path: str, bias_path: str | None, feature_dim: int):
    _, w = read_numeric_csv(weights_path)
    bias = None
    if bias_path is not None:
        _, b = read_numeric_csv(bias_path)
        if b.ndim != 2 or b.shape[1] != 1:
            raise ParseError(f"{bias_path}: bias CSV must have exactly one column")
        bias = b[:, 0]
        if w.shape[1] != feature_dim:
            raise ParseError(
                f"{weights_path}: {w.shape[1]} columns do not match feature dim {feature_dim}"
            )
        return w, bias
    if w.shape[1] == feature_dim + 1:
        return w[:, :-1], w[:, -1]
    if w.shape[1] == feature_dim:
        return w, None
    raise ParseError(
        f"{weights_path}: {w.shape[1]} columns match neither d={feature_dim} nor d+1"
    )


def _cmd_metrics(args: argparse.Namespace) -> int:
    _, mat = read_numeric_csv(args.features)
    if mat.shape[1] < 2:
        raise ParseError(f"{args.features}: need feature columns plus a label column")
    features = mat[:, :-1]
    labels = mat[:, -1].astype(np.int64)
    if labels.min() < 0:
        raise ParseError(f"{args.features}: negative label")
    weights, bias = _load_weights(args.weights, args.bias, features.shape[1])
    num_classes = weights.shape[0]
    if labels.max() >= num_classes:
        raise ParseError(
            f"{args.features}: label {int(labels.max())} out of range for {num_classes} classifier rows"
        )
    report = nc_report(features, labels, weights, bias, num_classes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    _write_matrix_csv(out / "icpa_mu.csv", report.icpa_mu, "c")
    _write_matrix_csv(out / "icpa_w.csv", report.icpa_w, "c")
    print(json.dumps({k: v for k, v in report.to_dict().items() if not isinstance(v, list)}, indent=2))
    print(f"artifacts: {out.resolve()}")
    return 0


def _cmd_etf(args: argparse.Namespace) -> int:
    frame = make_etf(args.dim, args.classes, seed=args.seed)
    gram = frame.gram()
    print(f"simplex frame: {args.classes} vectors in R^{args.dim}, seed {args.seed}")
    print("gram matrix:")
    for row in gram:
        print("  " + " ".join(f"{v: .9g}" for v in row))
    print(f"deviation from target: {etf_deviation(frame.vectors):.3e}")
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_matrix_csv(path, frame.vertices, "dim")
        print(f"frame written to {path.resolve()}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = parse_config_file(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseError(f"--values: {exc}") from exc
    rows = sweep(cfg, args.param, values)
    out = args.out or f"sweep_{args.param}.csv"
    write_sweep_csv(rows, out)
    for row in rows:
        print(row.csv_row())
    print(f"table written to {Path(out).resolve()}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "metrics": _cmd_metrics,
        "etf": _cmd_etf,
        "sweep": _cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except CollapseLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
