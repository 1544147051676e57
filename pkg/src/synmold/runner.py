"""Sweep orchestration: mixing-ratio experiments over seeded training runs.

A sweep trains the classifier `runs_per_level` times at every mixing level
(additive percentages or substitutive counts), evaluates each run on a
real-only validation set, and aggregates per-level means, standard
deviations, and per-epoch curves. Cell seeds derive from
``mix64(base_seed, level_index, run_index)``, so cells are independent and
the whole sweep is reproducible byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .lstm import ModelConfig, TrainingHistory, predict, train
from .metrics import EvalResult, aggregate_runs, evaluate_scores
from .pipeline import (
    MixAccounting,
    MixMode,
    SplitSpec,
    augment_dataset,
    mix_additive,
    mix_substitutive,
    split_real,
)
from .rng import mix64
from .schema import Dataset, Source
from .simulator import SimulatorConfig, generate_dataset
from .storage import read_manifest

__all__ = [
    "DEFAULT_ADDITIVE_LEVELS",
    "DEFAULT_SUBSTITUTIVE_LEVELS",
    "SweepConfig",
    "CellResult",
    "LevelReport",
    "SweepReport",
    "SweepCellError",
    "run_cell",
    "run_sweep",
    "render_report",
    "load_report",
]

DEFAULT_ADDITIVE_LEVELS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
DEFAULT_SUBSTITUTIVE_LEVELS = (0, 55, 110, 165, 220, 275, 330)

REPORT_JSON = "sweep.json"
CURVE_FIELDS = ("mean_train_acc", "mean_train_loss", "mean_val_acc", "mean_val_loss")
METRIC_KEYS = (
    "val_accuracy",
    "val_loss",
    "train_accuracy",
    "train_loss",
    "f1",
    "auc_roc",
)


class SweepCellError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: mode, levels, model, data sources, and output location.

    When dataset paths are omitted, the sweep generates its own stand-in
    real set and synthetic pool once (not per run) from `sim` and the
    sweep's base seed, quadruples both by decimation, and proceeds.
    """

    mode: MixMode = MixMode.ADDITIVE
    levels: tuple[float, ...] = DEFAULT_ADDITIVE_LEVELS
    runs_per_level: int = 50
    base_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    real_dataset: Optional[Path] = None
    synthetic_dataset: Optional[Path] = None
    output_dir: Path = Path("sweep-output")
    val_fraction: float = 0.33
    sim: SimulatorConfig = field(default_factory=SimulatorConfig)
    standin_real_cycles: int = 275
    standin_real_mix: tuple[float, float] = (0.565, 0.435)
    synthetic_pool_cycles: int = 100
    synthetic_pool_mix: tuple[float, float] = (0.4, 0.6)
    augment_factor: int = 4
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("levels must be non-empty")
        if self.runs_per_level < 1:
            raise ValueError("runs_per_level must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "levels": list(self.levels),
            "runs_per_level": self.runs_per_level,
            "base_seed": self.base_seed,
            "model": self.model.to_dict(),
            "real_dataset": str(self.real_dataset) if self.real_dataset else None,
            "synthetic_dataset": (
                str(self.synthetic_dataset) if self.synthetic_dataset else None
            ),
            "output_dir": str(self.output_dir),
            "val_fraction": self.val_fraction,
            "sim": self.sim.to_dict(),
            "standin_real_cycles": self.standin_real_cycles,
            "standin_real_mix": list(self.standin_real_mix),
            "synthetic_pool_cycles": self.synthetic_pool_cycles,
            "synthetic_pool_mix": list(self.synthetic_pool_mix),
            "augment_factor": self.augment_factor,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class CellResult:
    level: float
    run_index: int
    seed: int
    accounting: MixAccounting
    validation: EvalResult
    final_train_accuracy: float
    final_train_loss: float
    history: TrainingHistory

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "run_index": self.run_index,
            "seed": self.seed,
            "accounting": self.accounting.to_dict(),
            "validation": self.validation.to_dict(),
            "final_train_accuracy": self.final_train_accuracy,
            "final_train_loss": self.final_train_loss,
            "history": self.history.to_dict(),
        }


@dataclass(frozen=True)
class LevelReport:
    level: float
    accounting: MixAccounting
    mean: dict[str, float]
    std: dict[str, float]
    curves: dict[str, tuple[float, ...]]
    runs: tuple[CellResult, ...]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "accounting": self.accounting.to_dict(),
            "mean": dict(self.mean),
            "std": dict(self.std),
            "curves": {k: list(v) for k, v in self.curves.items()},
            "runs": [r.to_dict() for r in self.runs],
        }


@dataclass(frozen=True)
class SweepReport:
    mode: MixMode
    base_seed: int
    runs_per_level: int
    levels: tuple[LevelReport, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "base_seed": self.base_seed,
            "runs_per_level": self.runs_per_level,
            "levels": [lv.to_dict() for lv in self.levels],
        }


def prepare_datasets(config: SweepConfig) -> tuple[Dataset, Dataset]:
    """Load the real and synthetic datasets, generating defaults when no
    paths are configured. Generation happens once per sweep."""
    if config.real_dataset is not None:
        real = read_manifest(config.real_dataset)
    else:
        real = augment_dataset(
            generate_dataset(
                config.sim,
                config.standin_real_cycles,
                config.standin_real_mix,
                base_seed=mix64(config.base_seed, 11),
                source=Source.REAL,
                name="real-standin",
            ),
            config.augment_factor,
        )
    if config.synthetic_dataset is not None:
        pool = read_manifest(config.synthetic_dataset)
    else:
        pool = augment_dataset(
            generate_dataset(
                config.sim,
                config.synthetic_pool_cycles,
                config.synthetic_pool_mix,
                base_seed=mix64(config.base_seed, 12),
                source=Source.SYNTHETIC,
                name="synthetic-pool",
            ),
            config.augment_factor,
        )
    return real, pool


def run_cell(
    config: SweepConfig,
    real: Dataset,
    pool: Dataset,
    level_index: int,
    run_index: int,
) -> CellResult:
    """One training run: fresh seeded split, mix at the level, train,
    evaluate on the real-only validation split."""
    level = config.levels[level_index]
    cell_seed = mix64(config.base_seed, level_index, run_index)
    try:
        train_real, val = split_real(
            real, SplitSpec(config.val_fraction, seed=mix64(cell_seed, 1))
        )
        if config.mode is MixMode.ADDITIVE:
            mixed, accounting = mix_additive(
                train_real,
                pool,
                percent=level,
                real_total=len(real),
                seed=mix64(cell_seed, 2),
            )
        else:
            mixed, accounting = mix_substitutive(
                train_real,
                pool,
                synthetic_count=int(level),
                fixed_size=len(train_real),
                seed=mix64(cell_seed, 2),
            )
        result = train(config.model, mixed, val, seed=mix64(cell_seed, 3))
        val_scores = predict(result.params, val, config.model, result.stats)
        val_targets = np.array([r.label.target for r in val.records])
        validation = evaluate_scores(val_scores, val_targets)
    except Exception as exc:
        raise SweepCellError(
            f"cell failed (mode={config.mode.value}, level={level}, "
            f"run={run_index}): {exc}"
        ) from exc
    return CellResult(
        level=level,
        run_index=run_index,
        seed=cell_seed,
        accounting=accounting,
        validation=validation,
        final_train_accuracy=result.history.train_accuracy[-1],
        final_train_loss=result.history.train_loss[-1],
        history=result.history,
    )


def _aggregate_level(level: float, runs: tuple[CellResult, ...]) -> LevelReport:
    mean_eval, std_eval = aggregate_runs([r.validation for r in runs])
    train_acc = np.array([r.final_train_accuracy for r in runs])
    train_loss = np.array([r.final_train_loss for r in runs])
    mean = {
        "val_accuracy": mean_eval["accuracy"],
        "val_loss": mean_eval["loss"],
        "train_accuracy": float(train_acc.mean()),
        "train_loss": float(train_loss.mean()),
        "f1": mean_eval["f1"],
        "auc_roc": mean_eval["auc_roc"],
    }
    std = {
        "val_accuracy": std_eval["accuracy"],
        "val_loss": std_eval["loss"],
        "train_accuracy": float(train_acc.std(ddof=0)),
        "train_loss": float(train_loss.std(ddof=0)),
        "f1": std_eval["f1"],
        "auc_roc": std_eval["auc_roc"],
    }
    curves = {
        "mean_train_acc": tuple(
            np.mean([r.history.train_accuracy for r in runs], axis=0)
        ),
        "mean_train_loss": tuple(np.mean([r.history.train_loss for r in runs], axis=0)),
        "mean_val_acc": tuple(np.mean([r.history.val_accuracy for r in runs], axis=0)),
        "mean_val_loss": tuple(np.mean([r.history.val_loss for r in runs], axis=0)),
    }
    return LevelReport(
        level=level,
        accounting=runs[0].accounting,
        mean=mean,
        std=std,
        curves=curves,
        runs=runs,
    )


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _level_tag(mode: MixMode, level: float) -> str:
    if mode is MixMode.ADDITIVE:
        return f"add_{level:g}pct"
    return f"sub_{int(level)}"


def run_sweep(config: SweepConfig) -> SweepReport:
    """Execute every (level, run) cell, write raw per-run results, and
    return the aggregated report. A failed cell writes a partial-results
    file before the error propagates."""
    out_dir = Path(config.output_dir)
    real, pool = prepare_datasets(config)

    jobs = [
        (li, ri)
        for li in range(len(config.levels))
        for ri in range(config.runs_per_level)
    ]
    results: dict[tuple[int, int], CellResult] = {}
    try:
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool_exec:
                futures = {
                    job: pool_exec.submit(run_cell, config, real, pool, *job)
                    for job in jobs
                }
                for job in jobs:
                    results[job] = futures[job].result()
        else:
            for job in jobs:
                results[job] = run_cell(config, real, pool, *job)
    except SweepCellError:
        partial = {
            "completed": [results[j].to_dict() for j in jobs if j in results],
            "config": config.to_dict(),
        }
        _write_json(out_dir / "partial_results.json", partial)
        raise

    level_reports = []
    for li, level in enumerate(config.levels):
        runs = tuple(results[(li, ri)] for ri in range(config.runs_per_level))
        level_reports.append(_aggregate_level(level, runs))
    report = SweepReport(
        mode=config.mode,
        base_seed=config.base_seed,
        runs_per_level=config.runs_per_level,
        levels=tuple(level_reports),
    )

    for level_report in report.levels:
        tag = _level_tag(report.mode, level_report.level)
        for run in level_report.runs:
            _write_json(
                out_dir / "runs" / tag / f"run_{run.run_index:03d}.json",
                run.to_dict(),
            )
    _write_json(out_dir / REPORT_JSON, report.to_dict())
    return report


def load_report(directory: Path | str) -> SweepReport:
    """Rebuild a SweepReport from a sweep output directory."""
    with open(Path(directory) / REPORT_JSON, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    levels = []
    for raw in payload["levels"]:
        runs = tuple(
            CellResult(
                level=r["level"],
                run_index=r["run_index"],
                seed=r["seed"],
                accounting=MixAccounting(
                    mode=MixMode.from_name(r["accounting"]["mode"]),
                    level=r["accounting"]["level"],
                    real_count=r["accounting"]["real_count"],
                    synthetic_count=r["accounting"]["synthetic_count"],
                    training_count=r["accounting"]["training_count"],
                    total_count=r["accounting"]["total_count"],
                    synthetic_fraction_training=r["accounting"][
                        "synthetic_fraction_training"
                    ],
                ),
                validation=EvalResult(
                    accuracy=r["validation"]["accuracy"],
                    loss=r["validation"]["loss"],
                    f1=r["validation"]["f1"],
                    auc_roc=r["validation"]["auc_roc"],
                    confusion=tuple(r["validation"]["confusion"]),
                ),
                final_train_accuracy=r["final_train_accuracy"],
                final_train_loss=r["final_train_loss"],
                history=TrainingHistory(
                    train_loss=tuple(r["history"]["train_loss"]),
                    train_accuracy=tuple(r["history"]["train_accuracy"]),
                    val_loss=tuple(r["history"]["val_loss"]),
                    val_accuracy=tuple(r["history"]["val_accuracy"]),
                ),
            )
            for r in raw["runs"]
        )
        levels.append(
            LevelReport(
                level=raw["level"],
                accounting=runs[0].accounting,
                mean=dict(raw["mean"]),
                std=dict(raw["std"]),
                curves={k: tuple(v) for k, v in raw["curves"].items()},
                runs=runs,
            )
        )
    return SweepReport(
        mode=MixMode.from_name(payload["mode"]),
        base_seed=payload["base_seed"],
        runs_per_level=payload["runs_per_level"],
        levels=tuple(levels),
    )


_REPORT_COLUMNS = (
    "level",
    "total_count",
    "training_count",
    "real_count",
    "synthetic_count",
    "synthetic_fraction_training_pct",
)


def _report_rows(report: SweepReport) -> list[dict[str, float]]:
    rows = []
    for lv in report.levels:
        row: dict[str, float] = {
            "level": lv.level,
            "total_count": lv.accounting.total_count,
            "training_count": lv.accounting.training_count,
            "real_count": lv.accounting.real_count,
            "synthetic_count": lv.accounting.synthetic_count,
            "synthetic_fraction_training_pct": 100.0
            * lv.accounting.synthetic_fraction_training,
        }
        for key in METRIC_KEYS:
            row[f"mean_{key}"] = lv.mean[key]
            row[f"std_{key}"] = lv.std[key]
        rows.append(row)
    return rows


def render_report(
    report: SweepReport,
    out_dir: Path | str,
    formats: tuple[str, ...] = ("csv", "markdown"),
) -> list[Path]:
    """Write `report.csv` / `report.md` plus per-level curve CSVs.

    Output is byte-stable for identical reports: full-precision float
    rendering, fixed column order, no timestamps.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _report_rows(report)
    columns = list(_REPORT_COLUMNS) + [
        f"{agg}_{key}" for key in METRIC_KEYS for agg in ("mean", "std")
    ]
    written: list[Path] = []

    if "csv" in formats:
        path = out_dir / "report.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_render_cell(row[c]) for c in columns) + "\n")
        written.append(path)

    if "markdown" in formats:
        path = out_dir / "report.md"
        level_word = "percent added" if report.mode is MixMode.ADDITIVE else "synthetic count"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# Sweep report ({report.mode.value} mixing)\n\n")
            fh.write(
                f"Levels are {level_word}; {report.runs_per_level} runs per level, "
                f"base seed {report.base_seed}. Std columns are population "
                f"standard deviations over runs (reported alongside the means "
                f"as an extension).\n\n"
            )
            fh.write("| " + " | ".join(columns) + " |\n")
            fh.write("|" + "|".join("---" for _ in columns) + "|\n")
            for row in rows:
                fh.write(
                    "| " + " | ".join(_format_md(row[c], c) for c in columns) + " |\n"
                )
        written.append(path)

    curves_dir = out_dir / "curves"
    curves_dir.mkdir(exist_ok=True)
    for lv in report.levels:
        path = curves_dir / f"{_level_tag(report.mode, lv.level)}.csv"
        n_epochs = len(lv.curves["mean_val_acc"])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch," + ",".join(CURVE_FIELDS) + "\n")
            for epoch in range(n_epochs):
                cells = [str(epoch + 1)] + [
                    repr(float(lv.curves[f][epoch])) for f in CURVE_FIELDS
                ]
                fh.write(",".join(cells) + "\n")
        written.append(path)
    return written


def _render_cell(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _format_md(value: float, column: str) -> str:
    if column in _REPORT_COLUMNS[:5]:
        return _render_cell(value)
    return f"{value:.4f}"
