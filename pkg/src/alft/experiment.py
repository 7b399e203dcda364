"""Configuration-driven experiment runner.

Executes every (run config, seed) pair, collects per-epoch metrics, and
writes three CSV files into the output directory:

* ``curves.csv``  - one row per config/seed/epoch (learning-curve data)
* ``summary.csv`` - per-config aggregates across seeds
* ``significance.csv`` - paired t-test of each config against the baseline

Config files are flat ``key = value`` text with dotted sections; see
README for the schema. Unknown keys are hard errors. Scalar run fields
accept ``a|b|c`` values, which expand into a grid of derived configs.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import Dataset, SynthSpec, load_dataset, split_dataset, synth_generate
from .errors import ConfigError, UndefinedResultError
from .pipeline import EpochReport, RunConfig, run_training, validate_config
from .stats import paired_t_test

log = logging.getLogger(__name__)

CURVE_COLUMNS = (
    "config_id", "seed", "epoch", "val_f1", "test_f1",
    "annotated_fraction", "cumulative_unique_fraction",
)
SUMMARY_COLUMNS = (
    "config_id", "mean_final_f1", "best_epoch", "best_f1", "fraction_at_best", "f1_std",
)
SIGNIFICANCE_COLUMNS = ("config_id", "baseline_id", "t", "p")
ERROR_COLUMNS = ("config_id", "error")


@dataclass
class MetricsRow:
    """One learning-curve point."""

    config_id: str
    seed: int
    epoch: int
    val_f1: float
    test_f1: float
    annotated_fraction: float
    cumulative_unique_fraction: float


@dataclass
class ExperimentConfig:
    """A dataset source plus named run configs and execution settings."""

    run_configs: dict[str, RunConfig]
    dataset_path: str | None = None
    synth: SynthSpec | None = None
    split: tuple[float, float, float] | None = None
    split_seed: int = 0
    runs: int = 3
    seed_base: int = 0
    out_dir: str = "results"
    baseline: str | None = None
    workers: int = 1

    def validate(self) -> None:
        if not self.run_configs:
            raise ConfigError("no run configs defined")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if (self.dataset_path is None) == (self.synth is None):
            raise ConfigError("define exactly one of dataset.path or dataset.synth.*")
        if self.baseline is not None and self.baseline not in self.run_configs:
            raise ConfigError(f"baseline {self.baseline!r} is not a defined run config")
        for name, cfg in self.run_configs.items():
            try:
                validate_config(cfg)
            except ConfigError as exc:
                raise ConfigError(f"run config {name!r}: {exc}") from exc


def load_materialized_dataset(config: ExperimentConfig) -> Dataset:
    """Load or generate the dataset and make sure split tags exist."""
    if config.dataset_path is not None:
        dataset = load_dataset(config.dataset_path)
    else:
        dataset = synth_generate(config.synth)
    has_tags = bool(np.all(dataset.splits != ""))
    if not has_tags:
        split = config.split if config.split is not None else (0.8, 0.1, 0.1)
        dataset = split_dataset(dataset, split, config.split_seed)
    return dataset


# --- config file parsing -------------------------------------------------

_RUNCONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    """Convert a raw string to the RunConfig field's type."""
    spec = _RUNCONFIG_FIELDS[name]
    if name == "linear_fractions":
        return tuple(float(v) for v in raw.split(","))
    if name == "cluster_count":
        return int(raw)
    if spec.type in ("int", int):
        return int(raw)
    if spec.type in ("float", float):
        return float(raw)
    return raw


def _parse_scalar(raw: str):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read the dotted key-value format; unknown keys are errors."""
    dataset_path = None
    synth_kv: dict[str, str] = {}
    split = None
    split_seed = 0
    runs, seed_base, out_dir, baseline, workers = 3, 0, "results", None, 1
    run_kv: dict[str, dict[str, str]] = {}

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            parts = key.split(".")
            try:
                if parts == ["dataset", "path"]:
                    dataset_path = value
                elif parts[:2] == ["dataset", "synth"] and len(parts) == 3:
                    synth_kv[parts[2]] = value
                elif parts == ["dataset", "split"]:
                    split = tuple(float(v) for v in value.split(","))
                elif parts == ["dataset", "split_seed"]:
                    split_seed = int(value)
                elif parts == ["experiment", "runs"]:
                    runs = int(value)
                elif parts == ["experiment", "seed_base"]:
                    seed_base = int(value)
                elif parts == ["experiment", "out_dir"]:
                    out_dir = value
                elif parts == ["experiment", "baseline"]:
                    baseline = value
                elif parts == ["experiment", "workers"]:
                    workers = int(value)
                elif parts[0] == "run" and len(parts) == 3:
                    if parts[2] not in _RUNCONFIG_FIELDS or parts[2] == "seed":
                        raise ConfigError(f"unknown run option {parts[2]!r}")
                    run_kv.setdefault(parts[1], {})[parts[2]] = value
                else:
                    raise ConfigError(f"unknown key {key!r}")
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc

    synth = None
    if synth_kv:
        allowed = {f.name for f in fields(SynthSpec)}
        unknown = set(synth_kv) - allowed
        if unknown:
            raise ConfigError(f"{path}: unknown synth option(s) {sorted(unknown)}")
        kwargs = {}
        for name, value in synth_kv.items():
            if name == "weights":
                kwargs[name] = tuple(float(v) for v in value.split(","))
            elif name in ("separation", "noise"):
                kwargs[name] = float(value)
            else:
                kwargs[name] = int(value)
        synth = SynthSpec(**kwargs)

    run_configs: dict[str, RunConfig] = {}
    for run_id, options in run_kv.items():
        for name, cfg_options in _expand_grid(run_id, options):
            if name in run_configs:
                raise ConfigError(f"{path}: duplicate run config id {name!r}")
            kwargs = {k: _coerce(k, v) for k, v in cfg_options.items()}
            run_configs[name] = RunConfig(**kwargs)

    return ExperimentConfig(
        run_configs=run_configs,
        dataset_path=dataset_path,
        synth=synth,
        split=split,
        split_seed=split_seed,
        runs=runs,
        seed_base=seed_base,
        out_dir=out_dir,
        baseline=baseline,
        workers=workers,
    )


def _expand_grid(run_id: str, options: dict[str, str]):
    """Expand a|b|c values into one derived config per combination."""
    combos: list[tuple[str, dict[str, str]]] = [(run_id, {})]
    for key, value in options.items():
        choices = value.split("|") if "|" in value else [value]
        nxt = []
        for name, acc in combos:
            for choice in choices:
                derived = name if len(choices) == 1 else f"{name}__{key}_{choice.strip()}"
                nxt.append((derived, {**acc, key: choice.strip()}))
        combos = nxt
    return combos


# --- execution and aggregation -------------------------------------------


@dataclass
class ExperimentResult:
    curves: list[MetricsRow]
    summary: list[dict]
    significance: list[dict]
    errors: list[dict] = field(default_factory=list)


def _run_one(config_id: str, cfg: RunConfig, seed: int, dataset: Dataset) -> list[MetricsRow]:
    reports = run_training(replace(cfg, seed=seed), dataset)
    return [
        MetricsRow(
            config_id=config_id,
            seed=seed,
            epoch=r.epoch,
            val_f1=r.val_f1,
            test_f1=r.test_f1,
            annotated_fraction=r.annotated_fraction,
            cumulative_unique_fraction=r.cumulative_fraction,
        )
        for r in reports
    ]


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentResult:
    """Execute all runs, aggregate, and write the CSV outputs."""
    config.validate()
    if dataset is None:
        dataset = load_materialized_dataset(config)

    jobs = [
        (config_id, cfg, config.seed_base + i)
        for config_id, cfg in config.run_configs.items()
        for i in range(config.runs)
    ]
    results: dict[tuple[str, int], list[MetricsRow]] = {}
    failed: dict[str, str] = {}

    def execute(job):
        config_id, cfg, seed = job
        return config_id, seed, _run_one(config_id, cfg, seed, dataset)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [(job, pool.submit(execute, job)) for job in jobs]
            for (config_id, _, seed), fut in futures:
                try:
                    _, _, rows = fut.result()
                    results[(config_id, seed)] = rows
                except Exception as exc:  # noqa: BLE001 - per-config abort, not fatal
                    failed.setdefault(config_id, f"{type(exc).__name__}: {exc}")
    else:
        for job in jobs:
            try:
                config_id, seed, rows = execute(job)
                results[(config_id, seed)] = rows
            except Exception as exc:  # noqa: BLE001
                failed.setdefault(job[0], f"{type(exc).__name__}: {exc}")

    for config_id, message in failed.items():
        log.error("run config %r failed: %s", config_id, message)

    curves: list[MetricsRow] = []
    for config_id in config.run_configs:
        if config_id in failed:
            continue
        for seed in range(config.seed_base, config.seed_base + config.runs):
            curves.extend(results[(config_id, seed)])

    ok_ids = [cid for cid in config.run_configs if cid not in failed]
    summary = summarize_curves(curves, ok_ids)
    significance = significance_rows(curves, ok_ids, config.baseline)
    errors = [
        {"config_id": cid, "error": msg} for cid, msg in sorted(failed.items())
    ]

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(
        [vars(r) for r in curves], CURVE_COLUMNS, out_dir / "curves.csv"
    )
    emit_csv(summary, SUMMARY_COLUMNS, out_dir / "summary.csv")
    emit_csv(significance, SIGNIFICANCE_COLUMNS, out_dir / "significance.csv")
    if errors:
        emit_csv(errors, ERROR_COLUMNS, out_dir / "errors.csv")
    return ExperimentResult(curves, summary, significance, errors)


def _curve_matrix(curves: list[MetricsRow], config_id: str):
    """Metrics grouped as (seeds, epochs) arrays for one config."""
    rows = [r for r in curves if r.config_id == config_id]
    seeds = sorted({r.seed for r in rows})
    epochs = sorted({r.epoch for r in rows})
    idx = {(r.seed, r.epoch): r for r in rows}
    val = np.array([[idx[(s, e)].val_f1 for e in epochs] for s in seeds])
    test = np.array([[idx[(s, e)].test_f1 for e in epochs] for s in seeds])
    cum = np.array(
        [[idx[(s, e)].cumulative_unique_fraction for e in epochs] for s in seeds]
    )
    return seeds, epochs, val, test, cum


def summarize_curves(curves: list[MetricsRow], config_ids: list[str]) -> list[dict]:
    """Across-seed aggregates; best epoch picked on mean validation F1."""
    out = []
    for config_id in config_ids:
        seeds, epochs, val, test, cum = _curve_matrix(curves, config_id)
        if not seeds:
            continue
        mean_val = val.mean(axis=0)
        best_pos = int(np.argmax(mean_val))
        out.append(
            {
                "config_id": config_id,
                "mean_final_f1": float(test[:, -1].mean()),
                "best_epoch": int(epochs[best_pos]),
                "best_f1": float(test[:, best_pos].mean()),
                "fraction_at_best": float(cum[:, best_pos].mean()),
                "f1_std": float(test[:, -1].std()),
            }
        )
    return out


def significance_rows(
    curves: list[MetricsRow], config_ids: list[str], baseline: str | None
) -> list[dict]:
    """Paired t-test of final test F1 (per seed) against the baseline config."""
    if baseline is None or baseline not in config_ids:
        return []
    _, _, _, base_test, _ = _curve_matrix(curves, baseline)
    base_final = base_test[:, -1]
    out = []
    for config_id in config_ids:
        if config_id == baseline:
            continue
        _, _, _, test, _ = _curve_matrix(curves, config_id)
        final = test[:, -1]
        try:
            t, p = paired_t_test(final, base_final)
        except UndefinedResultError as exc:
            log.warning("t-test undefined for %r vs %r: %s", config_id, baseline, exc)
            t, p = float("nan"), float("nan")
        out.append({"config_id": config_id, "baseline_id": baseline, "t": t, "p": p})
    return out


def emit_csv(rows: list[dict], columns: tuple[str, ...], path: str | Path) -> None:
    """Header plus rows in fixed column order; floats keep full precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if set(row) != set(columns):
                raise ValueError(
                    f"row keys {sorted(row)} do not match columns {sorted(columns)}"
                )
            writer.writerow([_format_value(row[c]) for c in columns])


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_curves(path: str | Path) -> list[MetricsRow]:
    """Parse a curves.csv written by emit_csv back into rows."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                MetricsRow(
                    config_id=rec["config_id"],
                    seed=int(rec["seed"]),
                    epoch=int(rec["epoch"]),
                    val_f1=float(rec["val_f1"]),
                    test_f1=float(rec["test_f1"]),
                    annotated_fraction=float(rec["annotated_fraction"]),
                    cumulative_unique_fraction=float(rec["cumulative_unique_fraction"]),
                )
            )
    return rows
