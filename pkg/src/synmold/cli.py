"""Command-line entry point.

Subcommands wire the library into the four-stage workflow: generate
labeled cycles, enrich training sets (augment / split / mix), train and
evaluate the classifier, and run full mixing-ratio sweeps with rendered
reports and figures.

Every command is deterministic given its flags and seed; the fully
resolved configuration is echoed into the output directory as
`run_config.json`. Exit codes: 0 success, 2 configuration error, 3 data
error, 4 runtime error. If SYNMOLD_OUTPUT_ROOT is set, relative output
paths are resolved under it.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import lstm, metrics, runner, storage
from .figures import render_sweep_figures
from .pipeline import MixMode, SplitSpec, augment_dataset, mix_additive, mix_substitutive, split_real
from .schema import CANONICAL_SCHEMA, Source, class_balance
from .simulator import SimulationError, SimulatorConfig, generate_dataset
from .storage import SchemaMismatchError, StorageError

log = logging.getLogger("synmold")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class ConfigError(ValueError):
    pass


def _resolve_out(path: str) -> Path:
    root = os.environ.get("SYNMOLD_OUTPUT_ROOT")
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


def _write_run_config(out_dir: Path, command: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, **payload}
    with open(out_dir / "run_config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sim_config(args, file_cfg: dict) -> SimulatorConfig:
    cfg = SimulatorConfig.from_dict(file_cfg.get("simulator", {}))
    overrides = {}
    if getattr(args, "sample_period", None) is not None:
        overrides["sample_period_ms"] = args.sample_period
    if getattr(args, "jitter", None) is not None:
        overrides["jitter"] = args.jitter
    if getattr(args, "zero_noise", False):
        overrides["noise_std"] = {}
    if overrides:
        cfg = SimulatorConfig.from_dict({**cfg.to_dict(), **_merge_sim_overrides(cfg, overrides)})
    return cfg


def _merge_sim_overrides(cfg: SimulatorConfig, overrides: dict) -> dict:
    merged = cfg.to_dict()
    merged.update(overrides)
    return merged


def _model_config(args, file_cfg: dict) -> lstm.ModelConfig:
    cfg = lstm.ModelConfig.from_dict(file_cfg.get("model", {}))
    updates = {}
    for flag, field_name in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("learning_rate", "learning_rate"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            updates[field_name] = value
    if getattr(args, "no_standardize", False):
        updates["standardize"] = False
    return replace(cfg, **updates) if updates else cfg


def cmd_generate(args) -> int:
    file_cfg = _load_config_file(args.config)
    sim = _sim_config(args, file_cfg)
    out_dir = _resolve_out(args.out)
    mix = (args.good_frac, 1.0 - args.good_frac)
    dataset = generate_dataset(
        sim,
        args.count,
        mix,
        base_seed=args.seed,
        source=Source.from_name(args.source.capitalize()),
        name=args.name,
    )
    storage.write_manifest(dataset, out_dir)
    _write_run_config(
        out_dir,
        "generate",
        {
            "count": args.count,
            "good_frac": args.good_frac,
            "seed": args.seed,
            "source": args.source,
            "simulator": sim.to_dict(),
        },
    )
    good, notgood = class_balance(dataset)
    print(f"wrote {len(dataset)} cycles to {out_dir}")
    print(f"class balance: {good:.3f} Good / {notgood:.3f} NotGood")
    return EXIT_OK


def cmd_augment(args) -> int:
    dataset = storage.read_manifest(_resolve_out(args.input))
    augmented = augment_dataset(dataset, args.factor)
    out_dir = _resolve_out(args.out)
    storage.write_manifest(augmented, out_dir)
    _write_run_config(out_dir, "augment", {"factor": args.factor, "input": args.input})
    print(f"augmented {len(dataset)} -> {len(augmented)} cycles at {out_dir}")
    return EXIT_OK


def cmd_split(args) -> int:
    dataset = storage.read_manifest(_resolve_out(args.input))
    train_ds, val_ds = split_real(dataset, SplitSpec(args.val_frac, args.seed))
    out_train = _resolve_out(args.out_train)
    out_val = _resolve_out(args.out_val)
    storage.write_manifest(train_ds, out_train)
    storage.write_manifest(val_ds, out_val)
    _write_run_config(
        out_train,
        "split",
        {"val_frac": args.val_frac, "seed": args.seed, "role": "train"},
    )
    _write_run_config(
        out_val,
        "split",
        {"val_frac": args.val_frac, "seed": args.seed, "role": "val"},
    )
    print(f"split {len(dataset)} -> {len(train_ds)} train / {len(val_ds)} val")
    return EXIT_OK


def cmd_mix(args) -> int:
    real_train = storage.read_manifest(_resolve_out(args.real_train))
    pool = storage.read_manifest(_resolve_out(args.synthetic))
    mode = MixMode.from_name(args.mode)
    if mode is MixMode.ADDITIVE:
        if args.percent is None:
            raise ConfigError("additive mixing requires --percent")
        real_total = args.real_total if args.real_total is not None else len(real_train)
        mixed, accounting = mix_additive(
            real_train, pool, args.percent, real_total, args.seed
        )
    else:
        if args.count is None:
            raise ConfigError("substitutive mixing requires --count")
        fixed = args.fixed_size if args.fixed_size is not None else len(real_train)
        mixed, accounting = mix_substitutive(real_train, pool, args.count, fixed, args.seed)
    out_dir = _resolve_out(args.out)
    storage.write_manifest(mixed, out_dir)
    _write_run_config(out_dir, "mix", {"accounting": accounting.to_dict(), "seed": args.seed})
    print(
        f"mixed training set: {accounting.real_count} real + "
        f"{accounting.synthetic_count} synthetic = {accounting.training_count} "
        f"({100 * accounting.synthetic_fraction_training:.1f}% synthetic of the "
        f"real training count)"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    config = _model_config(args, file_cfg)
    train_ds = storage.read_manifest(_resolve_out(args.train))
    val_ds = storage.read_manifest(_resolve_out(args.val))
    result = lstm.train(config, train_ds, val_ds, seed=args.seed)
    out_path = _resolve_out(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lstm.save_model(
        out_path, result.params, config, result.stats, CANONICAL_SCHEMA.fingerprint()
    )
    if args.history:
        history_path = _resolve_out(args.history)
        history_path.parent.mkdir(parents=True, exist_ok=True)
        with open(history_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(result.history.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    _write_run_config(
        out_path.parent, "train", {"model": config.to_dict(), "seed": args.seed}
    )
    print(
        f"trained {config.epochs} epochs; final val accuracy "
        f"{result.history.val_accuracy[-1]:.4f}, val loss "
        f"{result.history.val_loss[-1]:.5f}; model at {out_path}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params, config, stats, fingerprint = lstm.load_model(_resolve_out(args.model))
    dataset = storage.read_manifest(_resolve_out(args.data))
    if fingerprint != dataset.schema.fingerprint():
        raise SchemaMismatchError(
            "model was trained against a different feature schema "
            f"({fingerprint} != {dataset.schema.fingerprint()})"
        )
    scores = lstm.predict(params, dataset, config, stats)
    targets = np.array([r.label.target for r in dataset.records])
    result = metrics.evaluate_scores(scores, targets)
    out_path = _resolve_out(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"accuracy {result.accuracy:.4f}  loss {result.loss:.5f}  "
        f"f1 {result.f1:.4f}  auc_roc {result.auc_roc:.4f}"
    )
    return EXIT_OK


def _parse_levels(raw: Optional[str], mode: MixMode) -> Optional[tuple[float, ...]]:
    if raw is None:
        return None
    try:
        values = tuple(float(x) for x in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"--levels must be a comma-separated number list: {raw!r}") from exc
    if mode is MixMode.SUBSTITUTIVE and any(v != int(v) for v in values):
        raise ConfigError("substitutive levels are synthetic record counts (integers)")
    return values


def cmd_sweep(args) -> int:
    file_cfg = _load_config_file(args.config)
    mode = MixMode.from_name(args.mode)
    model = _model_config(args, file_cfg)
    sim = _sim_config(args, file_cfg)
    levels = _parse_levels(args.levels, mode)
    if levels is None:
        levels = (
            runner.DEFAULT_ADDITIVE_LEVELS
            if mode is MixMode.ADDITIVE
            else tuple(float(x) for x in runner.DEFAULT_SUBSTITUTIVE_LEVELS)
        )
    out_dir = _resolve_out(args.out)
    config = runner.SweepConfig(
        mode=mode,
        levels=levels,
        runs_per_level=args.runs_per_level,
        base_seed=args.seed,
        model=model,
        real_dataset=_resolve_out(args.real) if args.real else None,
        synthetic_dataset=_resolve_out(args.synthetic) if args.synthetic else None,
        output_dir=out_dir,
        val_fraction=args.val_frac,
        sim=sim,
        standin_real_cycles=args.standin_real_cycles,
        synthetic_pool_cycles=args.synthetic_pool_cycles,
        augment_factor=args.augment_factor,
        workers=args.workers,
    )
    _write_run_config(out_dir, "sweep", {"sweep": config.to_dict()})
    report = runner.run_sweep(config)
    written = runner.render_report(report, out_dir)
    if not args.no_figures:
        written += render_sweep_figures(report, out_dir)
    print(f"sweep complete: {len(report.levels)} levels x {config.runs_per_level} runs")
    for lv in report.levels:
        print(
            f"  level {lv.level:g}: training {lv.accounting.training_count} "
            f"({lv.accounting.synthetic_count} synthetic), "
            f"mean val accuracy {lv.mean['val_accuracy']:.4f}"
        )
    print(f"report files under {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    sweep_dir = _resolve_out(args.sweep)
    report = runner.load_report(sweep_dir)
    out_dir = _resolve_out(args.out) if args.out else sweep_dir
    written = runner.render_report(report, out_dir)
    if not args.no_figures:
        written += render_sweep_figures(report, out_dir)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synmold",
        description=(
            "Generate synthetic injection-molding cycles, enrich training "
            "sets with them, and evaluate an LSTM quality classifier under "
            "different real/synthetic mixing ratios."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate and label a cycle dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--good-frac", type=float, default=0.4, help="target Good fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", choices=["synthetic", "real"], default="synthetic")
    p.add_argument("--name", default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--sample-period", type=int, default=None, help="ms between samples")
    p.add_argument("--jitter", type=float, default=None, help="setpoint jitter fraction")
    p.add_argument("--zero-noise", action="store_true", help="disable sensor noise")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment", help="quadruple a dataset by phase decimation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=int, default=4)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("split", help="split real data into train/validation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.add_argument("--val-frac", type=float, default=0.33)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("mix", help="mix synthetic cycles into a training set")
    p.add_argument("--mode", choices=["additive", "substitutive"], required=True)
    p.add_argument("--real-train", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percent", type=float, default=None, help="additive: % of real total")
    p.add_argument("--real-total", type=int, default=None)
    p.add_argument("--count", type=int, default=None, help="substitutive: synthetic count")
    p.add_argument("--fixed-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True, help="model artifact (.npz)")
    p.add_argument("--history", default=None, help="write per-epoch history JSON here")
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="metrics JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a mixing-ratio sweep")
    p.add_argument("--mode", choices=["additive", "substitutive"], default="additive")
    p.add_argument("--out", required=True)
    p.add_argument("--real", default=None, help="real dataset directory")
    p.add_argument("--synthetic", default=None, help="synthetic pool directory")
    p.add_argument("--levels", default=None, help="comma-separated levels")
    p.add_argument("--runs-per-level", type=int, default=50)
    p.add_argument("--val-frac", type=float, default=0.33)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--standin-real-cycles", type=int, default=275)
    p.add_argument("--synthetic-pool-cycles", type=int, default=100)
    p.add_argument("--augment-factor", type=int, default=4)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-render report files from sweep output")
    p.add_argument("--sweep", required=True, help="sweep output directory")
    p.add_argument("--out", default=None, help="render target (default: sweep dir)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StorageError, SchemaMismatchError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, runner.SweepCellError, lstm.TrainingDivergedError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
