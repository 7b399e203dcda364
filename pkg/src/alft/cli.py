"""Command-line entry points.

Subcommands:
  run       execute an experiment config file
  synth     generate a synthetic dataset file
  validate  check an experiment config without running it
  report    re-aggregate an existing curves.csv
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import SynthSpec, save_dataset, split_dataset, synth_generate
from .errors import ConfigError, SchemaError
from .experiment import (
    SIGNIFICANCE_COLUMNS,
    SUMMARY_COLUMNS,
    emit_csv,
    parse_experiment_config,
    read_curves,
    run_experiment,
    significance_rows,
    summarize_curves,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alft",
        description="Active-learning fine-tuning experiment harness.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", help="experiment config file")
    run.add_argument("--out-dir", help="override experiment.out_dir")
    run.add_argument("--runs", type=int, help="override runs per config")
    run.add_argument("--seed-base", type=int, help="override the first seed")
    run.add_argument("--workers", type=int, help="parallel run workers")

    synth = sub.add_parser("synth", help="emit a synthetic dataset")
    synth.add_argument("--classes", type=int, default=3)
    synth.add_argument("--per-class", type=int, default=1000)
    synth.add_argument("--dim", type=int, default=8)
    synth.add_argument("--separation", type=float, default=3.0)
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument(
        "--weights", help="comma-separated class weights for imbalance"
    )
    synth.add_argument(
        "--split", help="train,validation,test fractions (e.g. 0.8,0.1,0.1)"
    )
    synth.add_argument("--split-seed", type=int, default=0)
    synth.add_argument("-o", "--output", required=True, help="output .jsonl path")

    val = sub.add_parser("validate", help="check a config without running")
    val.add_argument("config", help="experiment config file")

    rep = sub.add_parser("report", help="re-aggregate an existing curves.csv")
    rep.add_argument("--curves", required=True, help="path to curves.csv")
    rep.add_argument("--baseline", help="config id to test significance against")
    rep.add_argument("--out-dir", help="where to write summary/significance CSVs")
    return parser


def _cmd_run(args) -> int:
    config = parse_experiment_config(args.config)
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    if args.runs is not None:
        config.runs = args.runs
    if args.seed_base is not None:
        config.seed_base = args.seed_base
    if args.workers is not None:
        config.workers = args.workers
    result = run_experiment(config)
    print(f"wrote {len(result.curves)} curve rows to {config.out_dir}/curves.csv")
    for row in result.summary:
        print(
            f"{row['config_id']}: final F1 {row['mean_final_f1']:.4f} "
            f"(best {row['best_f1']:.4f} at epoch {row['best_epoch']}, "
            f"fraction {row['fraction_at_best']:.3f}, std {row['f1_std']:.4f})"
        )
    for row in result.significance:
        print(
            f"{row['config_id']} vs {row['baseline_id']}: "
            f"t={row['t']:.4f} p={row['p']:.4f}"
        )
    if result.errors:
        for row in result.errors:
            print(f"FAILED {row['config_id']}: {row['error']}", file=sys.stderr)
        return 1
    return 0


def _cmd_synth(args) -> int:
    weights = None
    if args.weights:
        weights = tuple(float(w) for w in args.weights.split(","))
    spec = SynthSpec(
        classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        separation=args.separation,
        noise=args.noise,
        seed=args.seed,
        weights=weights,
    )
    dataset = synth_generate(spec)
    if args.split:
        fractions = tuple(float(f) for f in args.split.split(","))
        dataset = split_dataset(dataset, fractions, args.split_seed)
    save_dataset(dataset, args.output)
    print(f"wrote {len(dataset)} samples to {args.output}")
    return 0


def _cmd_validate(args) -> int:
    config = parse_experiment_config(args.config)
    config.validate()
    print(f"ok: {len(config.run_configs)} run config(s), {config.runs} seed(s) each")
    return 0


def _cmd_report(args) -> int:
    curves = read_curves(args.curves)
    config_ids = list(dict.fromkeys(r.config_id for r in curves))
    summary = summarize_curves(curves, config_ids)
    significance = significance_rows(curves, config_ids, args.baseline)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.curves).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(summary, SUMMARY_COLUMNS, out_dir / "summary.csv")
    emit_csv(significance, SIGNIFICANCE_COLUMNS, out_dir / "significance.csv")
    print(f"re-aggregated {len(curves)} rows into {out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": _cmd_run,
        "synth": _cmd_synth,
        "validate": _cmd_validate,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
