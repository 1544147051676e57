"""Shared domain vocabulary: feature schema, cycles, labels, datasets.

The canonical cycle matrix has exactly 34 columns: 23 measured signal
channels followed by the 11 machine setpoints repeated per row as constant
columns. Column order is fixed; every producer and consumer in this package
relies on it.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "FeatureKind",
    "FeatureDescriptor",
    "FeatureSchema",
    "CANONICAL_SCHEMA",
    "Label",
    "Source",
    "ProcessSetpoints",
    "QualityIndicators",
    "CycleRecord",
    "Dataset",
    "class_balance",
    "validate_cycle",
    "round_half_away",
]


def round_half_away(x: float) -> int:
    """Round half away from zero (0.5 -> 1, -0.5 -> -1).

    All count arithmetic in this package uses this rule so that derived
    split and mix sizes are reproducible across implementations.
    """
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


class FeatureKind(Enum):
    SIGNAL = "signal"
    SETPOINT = "setpoint"


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    unit: str
    kind: FeatureKind


_SIGNAL_FEATURES: tuple[tuple[str, str], ...] = (
    ("screw_position_mm", "mm"),
    ("screw_velocity_mm_s", "mm/s"),
    ("injection_pressure_bar", "bar"),
    ("cavity_pressure_bar", "bar"),
    ("holding_pressure_actual_bar", "bar"),
    ("back_pressure_actual_bar", "bar"),
    ("melt_temp_C", "degC"),
    ("mold_temp_C", "degC"),
    ("barrel_zone1_C", "degC"),
    ("barrel_zone2_C", "degC"),
    ("barrel_zone3_C", "degC"),
    ("nozzle_temp_C", "degC"),
    ("screw_rpm_actual", "1/min"),
    ("fill_volume_cm3", "cm3"),
    ("flow_rate_cm3_s", "cm3/s"),
    ("clamp_force_kN", "kN"),
    ("ejector_position_mm", "mm"),
    ("ejector_speed_mm_s", "mm/s"),
    ("coolant_temp_C", "degC"),
    ("coolant_flow_l_min", "l/min"),
    ("cushion_mm", "mm"),
    ("phase_id", "-"),
    ("elapsed_time_s", "s"),
)

_SETPOINT_FEATURES: tuple[tuple[str, str], ...] = (
    ("set_injection_speed_mm_s", "mm/s"),
    ("set_changeover_point_mm", "mm"),
    ("set_holding_pressure_bar", "bar"),
    ("set_holding_time_s", "s"),
    ("set_back_pressure_bar", "bar"),
    ("set_screw_rpm", "1/min"),
    ("set_injection_volume_cm3", "cm3"),
    ("set_piston_stroke_mm", "mm"),
    ("set_mold_temp_C", "degC"),
    ("set_melt_temp_C", "degC"),
    ("set_cooling_time_s", "s"),
)

FEATURE_COUNT = 34


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered descriptor list for the 34-column cycle matrix."""

    features: tuple[FeatureDescriptor, ...]

    def __post_init__(self) -> None:
        if len(self.features) != FEATURE_COUNT:
            raise ValueError(
                f"schema must have exactly {FEATURE_COUNT} features, "
                f"got {len(self.features)}"
            )
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def signal_indices(self) -> tuple[int, ...]:
        return tuple(
            i for i, f in enumerate(self.features) if f.kind is FeatureKind.SIGNAL
        )

    @property
    def setpoint_indices(self) -> tuple[int, ...]:
        return tuple(
            i for i, f in enumerate(self.features) if f.kind is FeatureKind.SETPOINT
        )

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def fingerprint(self) -> str:
        """Deterministic hash of the canonical feature list."""
        payload = ";".join(
            f"{f.name}|{f.unit}|{f.kind.value}" for f in self.features
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


CANONICAL_SCHEMA = FeatureSchema(
    features=tuple(
        [FeatureDescriptor(n, u, FeatureKind.SIGNAL) for n, u in _SIGNAL_FEATURES]
        + [FeatureDescriptor(n, u, FeatureKind.SETPOINT) for n, u in _SETPOINT_FEATURES]
    )
)


class Label(Enum):
    """Binary part quality. Good encodes to target 1.0, NotGood to 0.0."""

    GOOD = "Good"
    NOT_GOOD = "NotGood"

    @property
    def target(self) -> float:
        return 1.0 if self is Label.GOOD else 0.0

    @classmethod
    def from_target(cls, target: float) -> "Label":
        if target == 1.0:
            return cls.GOOD
        if target == 0.0:
            return cls.NOT_GOOD
        raise ValueError(f"target must be 0.0 or 1.0, got {target}")

    @classmethod
    def from_name(cls, name: str) -> "Label":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown label {name!r}")


class Source(Enum):
    REAL = "Real"
    SYNTHETIC = "Synthetic"

    @classmethod
    def from_name(cls, name: str) -> "Source":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown source {name!r}")


@dataclass(frozen=True)
class ProcessSetpoints:
    """Machine setting parameters that drive one cycle."""

    injection_speed: float  # mm/s
    changeover_point: float  # mm
    holding_pressure: float  # bar
    holding_time: float  # s
    back_pressure: float  # bar
    screw_rpm: float  # 1/min
    injection_volume: float  # cm3
    piston_stroke: float  # mm
    mold_temp: float  # degC
    melt_temp: float  # degC
    cooling_time: float  # s

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not value > 0:
                raise ValueError(f"setpoint {name} must be strictly positive, got {value}")
        if not self.changeover_point < self.piston_stroke:
            raise ValueError(
                f"changeover_point ({self.changeover_point}) must be below "
                f"piston_stroke ({self.piston_stroke})"
            )

    def as_dict(self) -> dict[str, float]:
        return {
            "injection_speed": self.injection_speed,
            "changeover_point": self.changeover_point,
            "holding_pressure": self.holding_pressure,
            "holding_time": self.holding_time,
            "back_pressure": self.back_pressure,
            "screw_rpm": self.screw_rpm,
            "injection_volume": self.injection_volume,
            "piston_stroke": self.piston_stroke,
            "mold_temp": self.mold_temp,
            "melt_temp": self.melt_temp,
            "cooling_time": self.cooling_time,
        }

    def as_array(self) -> np.ndarray:
        """Values in the order of the schema's setpoint columns."""
        return np.array(list(self.as_dict().values()), dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ProcessSetpoints":
        names = list(cls.__dataclass_fields__)
        if len(values) != len(names):
            raise ValueError(f"expected {len(names)} setpoint values, got {len(values)}")
        return cls(**{n: float(v) for n, v in zip(names, values)})


@dataclass(frozen=True)
class QualityIndicators:
    """Quality figures derived from one simulated cycle."""

    fill_fraction: float
    peak_cavity_pressure: float  # bar
    min_cushion: float  # mm

    def __post_init__(self) -> None:
        if not 0.0 <= self.fill_fraction <= 1.0:
            raise ValueError(f"fill_fraction must be in [0, 1], got {self.fill_fraction}")


@dataclass(frozen=True)
class CycleRecord:
    """One production cycle: a T x 34 time-series matrix plus metadata.

    ``label`` is None for freshly simulated cycles that have not been
    classified yet; every record inside a ``Dataset`` must be labeled.
    The samples array is made read-only so records can be shared freely.
    """

    cycle_id: str
    source: Source
    label: Optional[Label]
    sample_period_ms: int
    samples: np.ndarray
    setpoints: ProcessSetpoints
    quality: Optional[QualityIndicators] = None

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_steps(self) -> int:
        return int(self.samples.shape[0])

    def with_label(self, label: Label) -> "CycleRecord":
        return replace(self, label=label)


@dataclass(frozen=True)
class Dataset:
    """A named collection of labeled cycles sharing one schema."""

    name: str
    schema: FeatureSchema
    records: tuple[CycleRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        for rec in self.records:
            if rec.label is None:
                raise ValueError(f"record {rec.cycle_id} has no label")

    def __len__(self) -> int:
        return len(self.records)

    def counts(self) -> tuple[int, int]:
        """(good, notgood) record counts."""
        good = sum(1 for r in self.records if r.label is Label.GOOD)
        return good, len(self.records) - good


def class_balance(dataset: Dataset) -> tuple[float, float]:
    """Fractions of Good and NotGood records; raises on an empty dataset."""
    if len(dataset) == 0:
        raise ValueError("class balance is undefined for an empty dataset")
    good, notgood = dataset.counts()
    total = len(dataset)
    return good / total, notgood / total


def validate_cycle(record: CycleRecord, schema: FeatureSchema) -> list[str]:
    """Check a record against the schema; returns all violations found.

    An empty list means the record is well formed. Violations are data,
    not exceptions: malformed records are representable so that callers
    can report every problem at once.
    """
    violations: list[str] = []
    samples = record.samples

    if samples.ndim != 2:
        violations.append(f"samples must be a 2-d matrix, got {samples.ndim} dims")
        return violations

    n_rows, n_cols = samples.shape
    if n_cols != len(schema.features):
        violations.append(
            f"column count: expected {len(schema.features)}, got {n_cols}"
        )
    if n_rows < 2:
        violations.append(f"row count: need at least 2 samples, got {n_rows}")
    if record.sample_period_ms <= 0:
        violations.append(
            f"sample_period_ms must be positive, got {record.sample_period_ms}"
        )

    bad = ~np.isfinite(samples)
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        violations.append(f"non-finite value at row {row}, column {col}")

    if n_cols == len(schema.features) and n_rows >= 1 and not bad.any():
        for idx in schema.setpoint_indices:
            column = samples[:, idx]
            if not np.all(column == column[0]):
                violations.append(
                    f"setpoint column {schema.features[idx].name} is not constant"
                )

    return violations
