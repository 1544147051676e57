"""Synthetic injection-molding cycles, dataset enrichment, and LSTM
quality-classification experiments."""

from .schema import (
    CANONICAL_SCHEMA,
    CycleRecord,
    Dataset,
    FeatureSchema,
    Label,
    ProcessSetpoints,
    QualityIndicators,
    Source,
    class_balance,
    validate_cycle,
)
from .simulator import (
    FaultMode,
    LabelThresholds,
    SimulatorConfig,
    generate_dataset,
    label_cycle,
    simulate_cycle,
)
from .pipeline import (
    MixAccounting,
    MixMode,
    SplitSpec,
    augment_dataset,
    decimate_augment,
    mix_additive,
    mix_substitutive,
    split_real,
)
from .storage import read_cycle, read_manifest, write_cycle, write_manifest
from .lstm import ModelConfig, TrainingHistory, predict, train
from .metrics import EvalResult, accuracy, aggregate_runs, auc_roc, evaluate_scores, f1
from .runner import SweepConfig, SweepReport, render_report, run_sweep

__version__ = "0.1.0"
