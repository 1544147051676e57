"""Labeled synthetic injection-molding cycles from a lumped-parameter model.

One cycle walks through five phases: dosing, injection, holding, cooling,
ejection. The screw meters a shot during dosing, injects it under velocity
control with a first-order lag, switches to pressure-controlled holding at
the changeover position, then the part cools and is ejected. Fault modes
perturb the shot volume, holding pressure, or melt temperature and push
the resulting quality indicators across the labeling thresholds.

The emitted ``fill_volume_cm3`` channel is defined as the running
trapezoidal integral of ``screw_velocity_mm_s`` times the screw area,
capped at the cavity volume, so flow bookkeeping can be audited directly
from the written channels. Kinematic channels are noise-free; analog
sensor channels carry Gaussian noise drawn from a counter-based stream,
which makes every cycle a pure function of (setpoints, fault, config, seed).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .rng import MASK64, CounterRng, mix64
from .schema import (
    CANONICAL_SCHEMA,
    CycleRecord,
    Dataset,
    Label,
    ProcessSetpoints,
    QualityIndicators,
    Source,
    round_half_away,
)

__all__ = [
    "FaultMode",
    "LabelThresholds",
    "SimulatorConfig",
    "SimulationError",
    "DEFAULT_SETPOINTS",
    "DEFAULT_NOISE_STD",
    "DEFAULT_FAULT_MIX",
    "simulate_cycle",
    "label_cycle",
    "generate_dataset",
]


class FaultMode(Enum):
    NONE = "None"
    SHORT_SHOT = "ShortShot"
    PRESSURE_LOSS = "PressureLoss"
    COLD_MELT = "ColdMelt"

    @classmethod
    def from_name(cls, name: str) -> "FaultMode":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown fault mode {name!r}")


class SimulationError(RuntimeError):
    """Non-finite state during simulation; carries the phase and step."""

    def __init__(self, phase: str, step: int, message: str):
        super().__init__(f"{message} (phase={phase}, step={step})")
        self.phase = phase
        self.step = step


@dataclass(frozen=True)
class LabelThresholds:
    """Quality gates: a cycle is Good only if it clears all three."""

    min_fill_fraction: float = 0.98
    cavity_pressure_band: tuple[float, float] = (480.0, 700.0)
    min_cushion_mm: float = 2.0

    def __post_init__(self) -> None:
        low, high = self.cavity_pressure_band
        if not (low < high):
            raise ValueError(f"pressure band must satisfy low < high, got ({low}, {high})")
        if low <= 0 or self.min_fill_fraction <= 0 or self.min_cushion_mm <= 0:
            raise ValueError("thresholds must be positive")


DEFAULT_SETPOINTS = ProcessSetpoints(
    injection_speed=120.0,
    changeover_point=25.0,
    holding_pressure=600.0,
    holding_time=0.8,
    back_pressure=80.0,
    screw_rpm=240.0,
    injection_volume=55.0,
    piston_stroke=320.0,
    mold_temp=60.0,
    melt_temp=230.0,
    cooling_time=1.5,
)

# Analog sensors only; kinematic channels stay noise-free so that the
# flow-conservation and monotonicity guarantees hold bitwise.
DEFAULT_NOISE_STD: dict[str, float] = {
    "injection_pressure_bar": 3.0,
    "cavity_pressure_bar": 3.0,
    "holding_pressure_actual_bar": 2.0,
    "back_pressure_actual_bar": 1.0,
    "melt_temp_C": 1.0,
    "mold_temp_C": 0.5,
    "barrel_zone1_C": 0.8,
    "barrel_zone2_C": 0.8,
    "barrel_zone3_C": 0.8,
    "nozzle_temp_C": 0.8,
    "screw_rpm_actual": 2.0,
    "clamp_force_kN": 4.0,
    "coolant_temp_C": 0.3,
    "coolant_flow_l_min": 0.15,
}

DEFAULT_FAULT_MIX: dict[FaultMode, float] = {
    FaultMode.NONE: 0.55,
    FaultMode.SHORT_SHOT: 0.25,
    FaultMode.PRESSURE_LOSS: 0.12,
    FaultMode.COLD_MELT: 0.08,
}

# Process-model constants. Velocity lag and cooling time constants and the
# viscosity law exp(-(melt - 230) / 40) are the documented model defaults;
# the rest shape plausible channel magnitudes.
TAU_VELOCITY_S = 0.05
COOLING_TAU_S = 4.0
VISCOSITY_REF_C = 230.0
VISCOSITY_SCALE_C = 40.0
K_DOSE_CM3_PER_REV = 11.5
RESIDUAL_CUSHION_MM = 5.0
INJECTION_TIMEOUT_FACTOR = 1.5
PRESSURE_PER_VELOCITY_INJ = 2.1  # bar per mm/s at reference viscosity
PRESSURE_PER_VELOCITY_CAV = 0.35
CAVITY_TRANSMISSION = 0.85
NOZZLE_RAMP_FACTOR = 0.9
RAMP_START_FILL = 0.8
PACK_VELOCITY_MM_S = 25.0
PACK_TAU_S = 0.35
PRESSURE_TAU_S = 0.05
RELEASE_TAU_S = 0.3
DECOMPRESSION_MM = 3.0
DECOMPRESSION_S = 0.1
EJECT_DURATION_S = 0.4
EJECT_STROKE_MM = 30.0
EJECT_SPEED_MM_S = 150.0
CLAMP_KN_PER_BAR = 0.9
COOLANT_DELTA_C = 20.0
BARREL_ZONE_OFFSETS_C = (-12.0, -6.0, -2.0)
NOZZLE_OFFSET_C = 2.0

PHASE_NAMES = ("dosing", "injection", "holding", "cooling", "ejection")


def _as_fault_mix(raw: Mapping) -> dict[FaultMode, float]:
    out: dict[FaultMode, float] = {}
    for key, prob in raw.items():
        mode = key if isinstance(key, FaultMode) else FaultMode.from_name(str(key))
        out[mode] = float(prob)
    return out


@dataclass(frozen=True)
class SimulatorConfig:
    """Everything that drives cycle generation besides the per-cycle seed."""

    sample_period_ms: int = 10
    noise_std: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_NOISE_STD)
    )
    jitter: float = 0.05
    fault_mix: Mapping[FaultMode, float] = field(
        default_factory=lambda: dict(DEFAULT_FAULT_MIX)
    )
    label_thresholds: LabelThresholds = field(default_factory=LabelThresholds)
    cavity_volume: float = 50.0
    screw_area: float = 2.0
    rng_seed: int = 0
    nominal_setpoints: ProcessSetpoints = field(default=DEFAULT_SETPOINTS)

    def __post_init__(self) -> None:
        if self.sample_period_ms <= 0:
            raise ValueError("sample_period_ms must be positive")
        if self.cavity_volume <= 0 or self.screw_area <= 0:
            raise ValueError("cavity_volume and screw_area must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        for name, std in self.noise_std.items():
            if std < 0:
                raise ValueError(f"noise std for {name} must be >= 0, got {std}")
            CANONICAL_SCHEMA.index_of(name)  # raises KeyError on unknown channel
        total = sum(self.fault_mix.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fault_mix probabilities must sum to 1, got {total}")

    def to_dict(self) -> dict:
        return {
            "sample_period_ms": self.sample_period_ms,
            "noise_std": dict(sorted(self.noise_std.items())),
            "jitter": self.jitter,
            "fault_mix": {m.value: p for m, p in self.fault_mix.items()},
            "label_thresholds": {
                "min_fill_fraction": self.label_thresholds.min_fill_fraction,
                "cavity_pressure_band": list(self.label_thresholds.cavity_pressure_band),
                "min_cushion_mm": self.label_thresholds.min_cushion_mm,
            },
            "cavity_volume": self.cavity_volume,
            "screw_area": self.screw_area,
            "rng_seed": self.rng_seed,
            "nominal_setpoints": self.nominal_setpoints.as_dict(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SimulatorConfig":
        kwargs: dict = {}
        if "sample_period_ms" in raw:
            kwargs["sample_period_ms"] = int(raw["sample_period_ms"])
        if "noise_std" in raw:
            kwargs["noise_std"] = {str(k): float(v) for k, v in raw["noise_std"].items()}
        if "jitter" in raw:
            kwargs["jitter"] = float(raw["jitter"])
        if "fault_mix" in raw:
            kwargs["fault_mix"] = _as_fault_mix(raw["fault_mix"])
        if "label_thresholds" in raw:
            lt = raw["label_thresholds"]
            kwargs["label_thresholds"] = LabelThresholds(
                min_fill_fraction=float(lt.get("min_fill_fraction", 0.98)),
                cavity_pressure_band=tuple(
                    float(x) for x in lt.get("cavity_pressure_band", (480.0, 700.0))
                ),
                min_cushion_mm=float(lt.get("min_cushion_mm", 2.0)),
            )
        for key in ("cavity_volume", "screw_area", "jitter"):
            if key in raw:
                kwargs[key] = float(raw[key])
        if "rng_seed" in raw:
            kwargs["rng_seed"] = int(raw["rng_seed"])
        if "nominal_setpoints" in raw:
            kwargs["nominal_setpoints"] = ProcessSetpoints(
                **{k: float(v) for k, v in raw["nominal_setpoints"].items()}
            )
        return cls(**kwargs)


def label_cycle(q: QualityIndicators, thresholds: LabelThresholds) -> Label:
    """Good iff fill, peak cavity pressure, and cushion all clear their
    gates; every boundary is inclusive."""
    low, high = thresholds.cavity_pressure_band
    ok = (
        q.fill_fraction >= thresholds.min_fill_fraction
        and low <= q.peak_cavity_pressure <= high
        and q.min_cushion >= thresholds.min_cushion_mm
    )
    return Label.GOOD if ok else Label.NOT_GOOD


def _cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros(len(values), dtype=np.float64)
    if len(values) > 1:
        out[1:] = np.cumsum((values[:-1] + values[1:]) * (0.5 * dt))
    return out


def simulate_cycle(
    setpoints: ProcessSetpoints,
    fault: FaultMode,
    config: SimulatorConfig,
    seed: int,
    source: Source = Source.SYNTHETIC,
) -> tuple[CycleRecord, QualityIndicators]:
    """Run one cycle; returns the unlabeled record and its quality figures.

    Deterministic: identical (setpoints, fault, config, seed) reproduce the
    record bitwise. Stream consumption order is fixed: fault severity draw
    first, then per-channel noise in canonical column order.
    """
    dt = config.sample_period_ms / 1000.0
    rng = CounterRng(seed)
    sp = setpoints

    shot_scale = 1.0
    hold_scale = 1.0
    melt_drop = 0.0
    if fault is FaultMode.SHORT_SHOT:
        shot_scale = 1.0 - float(rng.uniform(1, 0.10, 0.30)[0])
    elif fault is FaultMode.PRESSURE_LOSS:
        hold_scale = float(rng.uniform(1, 0.50, 0.80)[0])
    elif fault is FaultMode.COLD_MELT:
        melt_drop = float(rng.uniform(1, 15.0, 30.0)[0])

    melt_eff = sp.melt_temp - melt_drop
    viscosity = math.exp(-(melt_eff - VISCOSITY_REF_C) / VISCOSITY_SCALE_C)
    shot_volume = sp.injection_volume * shot_scale
    hold_pressure_eff = sp.holding_pressure * hold_scale

    start_pos = min(
        RESIDUAL_CUSHION_MM + 10.0 * shot_volume / config.screw_area,
        sp.piston_stroke,
    )

    # dosing: screw retracts while plasticating the shot
    dose_rate = K_DOSE_CM3_PER_REV * sp.screw_rpm / 60.0
    n_dose = max(2, round_half_away(shot_volume / dose_rate / dt))
    pos_dose = np.linspace(RESIDUAL_CUSHION_MM, start_pos, n_dose)

    # injection: first-order velocity lag, ends at changeover or timeout
    v_target = sp.injection_speed / max(viscosity, 1.0)
    timeout_steps = max(
        2,
        math.ceil(
            INJECTION_TIMEOUT_FACTOR
            * (start_pos - sp.changeover_point)
            / sp.injection_speed
            / dt
        ),
    )
    lag = math.exp(-dt / TAU_VELOCITY_S)
    v_inj: list[float] = []
    pos_inj: list[float] = []
    v_prev, pos_prev = 0.0, start_pos
    for _ in range(timeout_steps):
        v_now = v_target + (v_prev - v_target) * lag
        pos_now = pos_prev - 0.5 * (v_prev + v_now) * dt
        v_inj.append(v_now)
        pos_inj.append(pos_now)
        v_prev, pos_prev = v_now, pos_now
        if pos_now <= sp.changeover_point:
            break
    n_inj = len(v_inj)

    # holding: pressure-controlled packing creep, position floored at zero
    n_hold = max(2, round_half_away(sp.holding_time / dt))
    v_hold: list[float] = []
    pos_hold: list[float] = []
    for j in range(1, n_hold + 1):
        v_now = PACK_VELOCITY_MM_S * math.exp(-j * dt / PACK_TAU_S)
        pos_now = pos_prev - 0.5 * (v_prev + v_now) * dt
        if pos_now < 0.0:
            v_now = max(0.0, 2.0 * pos_prev / dt - v_prev)
            pos_now = max(0.0, pos_prev - 0.5 * (v_prev + v_now) * dt)
        v_hold.append(v_now)
        pos_hold.append(pos_now)
        v_prev, pos_prev = v_now, pos_now
    pos_end_hold = pos_prev

    # cooling: screw decompresses slightly, then rests
    n_cool = max(2, round_half_away(sp.cooling_time / dt))
    decomp_steps = min(n_cool, max(1, round_half_away(DECOMPRESSION_S / dt)))
    ramp_up = np.minimum(np.arange(1, n_cool + 1) / decomp_steps, 1.0)
    pos_cool = pos_end_hold + DECOMPRESSION_MM * ramp_up

    # ejection: trapezoidal ejector stroke, screw at rest
    n_eject = max(2, round_half_away(EJECT_DURATION_S / dt))
    idx = np.arange(n_eject, dtype=np.float64)
    eject_pos = np.minimum.reduce(
        [
            EJECT_SPEED_MM_S * dt * (idx + 1.0),
            np.full(n_eject, EJECT_STROKE_MM),
            EJECT_SPEED_MM_S * dt * (n_eject - 1.0 - idx),
        ]
    )
    eject_pos = np.maximum(eject_pos, 0.0)
    eject_speed = np.abs(np.diff(eject_pos, prepend=0.0)) / dt

    counts = (n_dose, n_inj, n_hold, n_cool, n_eject)
    total_steps = sum(counts)
    bounds = np.cumsum((0,) + counts)
    sl = {
        name: slice(int(bounds[i]), int(bounds[i + 1]))
        for i, name in enumerate(PHASE_NAMES)
    }

    velocity = np.zeros(total_steps)
    velocity[sl["injection"]] = v_inj
    velocity[sl["holding"]] = v_hold

    position = np.empty(total_steps)
    position[sl["dosing"]] = pos_dose
    position[sl["injection"]] = pos_inj
    position[sl["holding"]] = pos_hold
    position[sl["cooling"]] = pos_cool
    position[sl["ejection"]] = pos_cool[-1]

    fill = np.minimum(
        _cumulative_trapezoid(velocity, dt) * (config.screw_area / 10.0),
        config.cavity_volume,
    )
    fill_fraction_series = fill / config.cavity_volume
    ramp = np.clip(
        (fill_fraction_series - RAMP_START_FILL) / (1.0 - RAMP_START_FILL), 0.0, 1.0
    )

    p_inj = np.zeros(total_steps)
    p_cav = np.zeros(total_steps)
    p_hold_ch = np.zeros(total_steps)
    p_back_ch = np.zeros(total_steps)

    p_inj[sl["dosing"]] = sp.back_pressure
    p_back_ch[sl["dosing"]] = sp.back_pressure

    inj = sl["injection"]
    p_inj[inj] = (
        viscosity * PRESSURE_PER_VELOCITY_INJ * velocity[inj]
        + NOZZLE_RAMP_FACTOR * hold_pressure_eff * ramp[inj]
    )
    p_cav[inj] = (
        viscosity * PRESSURE_PER_VELOCITY_CAV * velocity[inj]
        + CAVITY_TRANSMISSION * hold_pressure_eff * ramp[inj]
    )

    hold = sl["holding"]
    p_inj_switch = p_inj[inj][-1]
    p_cav_switch = p_cav[inj][-1]
    relax = np.exp(-np.arange(1, n_hold + 1) * dt / PRESSURE_TAU_S)
    p_inj[hold] = hold_pressure_eff + (p_inj_switch - hold_pressure_eff) * relax
    cav_target = CAVITY_TRANSMISSION * hold_pressure_eff
    p_cav[hold] = cav_target + (p_cav_switch - cav_target) * relax
    p_hold_ch[hold] = hold_pressure_eff

    tail = slice(sl["cooling"].start, total_steps)
    n_tail = total_steps - sl["cooling"].start
    release = np.exp(-np.arange(1, n_tail + 1) * dt / RELEASE_TAU_S)
    p_inj[tail] = p_inj[hold][-1] * release
    p_cav[tail] = p_cav[hold][-1] * release

    coolant_temp = max(15.0, sp.mold_temp - COOLANT_DELTA_C)
    melt_ch = np.full(total_steps, melt_eff)
    decay = np.exp(-np.arange(1, n_tail + 1) * dt / COOLING_TAU_S)
    melt_ch[tail] = coolant_temp + (melt_eff - coolant_temp) * decay

    rpm_ch = np.zeros(total_steps)
    rpm_ch[sl["dosing"]] = sp.screw_rpm

    cushion = position.copy()
    cushion[tail] = pos_end_hold

    ejector_pos = np.zeros(total_steps)
    ejector_speed = np.zeros(total_steps)
    ejector_pos[sl["ejection"]] = eject_pos
    ejector_speed[sl["ejection"]] = eject_speed

    phase_id = np.empty(total_steps)
    for i, name in enumerate(PHASE_NAMES):
        phase_id[sl[name]] = float(i)

    channels = {
        "screw_position_mm": position,
        "screw_velocity_mm_s": velocity,
        "injection_pressure_bar": p_inj,
        "cavity_pressure_bar": p_cav,
        "holding_pressure_actual_bar": p_hold_ch,
        "back_pressure_actual_bar": p_back_ch,
        "melt_temp_C": melt_ch,
        "mold_temp_C": np.full(total_steps, sp.mold_temp),
        "barrel_zone1_C": np.full(total_steps, melt_eff + BARREL_ZONE_OFFSETS_C[0]),
        "barrel_zone2_C": np.full(total_steps, melt_eff + BARREL_ZONE_OFFSETS_C[1]),
        "barrel_zone3_C": np.full(total_steps, melt_eff + BARREL_ZONE_OFFSETS_C[2]),
        "nozzle_temp_C": np.full(total_steps, melt_eff + NOZZLE_OFFSET_C),
        "screw_rpm_actual": rpm_ch,
        "fill_volume_cm3": fill,
        "flow_rate_cm3_s": velocity * (config.screw_area / 10.0),
        "clamp_force_kN": CLAMP_KN_PER_BAR * p_cav,
        "ejector_position_mm": ejector_pos,
        "ejector_speed_mm_s": ejector_speed,
        "coolant_temp_C": np.full(total_steps, coolant_temp),
        "coolant_flow_l_min": np.full(total_steps, 12.0),
        "cushion_mm": cushion,
        "phase_id": phase_id,
        "elapsed_time_s": np.arange(total_steps) * dt,
    }

    samples = np.empty((total_steps, len(CANONICAL_SCHEMA.features)))
    for name, values in channels.items():
        samples[:, CANONICAL_SCHEMA.index_of(name)] = values
    setpoint_values = sp.as_array()
    for k, col in enumerate(CANONICAL_SCHEMA.setpoint_indices):
        samples[:, col] = setpoint_values[k]

    for descriptor in CANONICAL_SCHEMA.features:
        std = config.noise_std.get(descriptor.name, 0.0)
        if std > 0.0:
            col = CANONICAL_SCHEMA.index_of(descriptor.name)
            samples[:, col] += rng.normal(total_steps, 0.0, std)

    bad = ~np.isfinite(samples)
    if bad.any():
        step = int(np.argwhere(bad)[0][0])
        phase = PHASE_NAMES[int(np.searchsorted(bounds[1:], step, side="right"))]
        raise SimulationError(phase, step, "non-finite sample value")

    cav_col = samples[:, CANONICAL_SCHEMA.index_of("cavity_pressure_bar")]
    cushion_col = samples[:, CANONICAL_SCHEMA.index_of("cushion_mm")]
    quality = QualityIndicators(
        fill_fraction=float(
            np.clip(fill[-1] / config.cavity_volume, 0.0, 1.0)
        ),
        peak_cavity_pressure=float(cav_col.max()),
        min_cushion=float(cushion_col[hold].min()),
    )

    record = CycleRecord(
        cycle_id=f"cycle-{seed & MASK64:016x}",
        source=source,
        label=None,
        sample_period_ms=config.sample_period_ms,
        samples=samples,
        setpoints=sp,
        quality=quality,
    )
    return record, quality


def _jitter_setpoints(
    nominal: ProcessSetpoints, jitter: float, rng: CounterRng
) -> ProcessSetpoints:
    factors = rng.uniform(len(nominal.as_dict()), 1.0 - jitter, 1.0 + jitter)
    return ProcessSetpoints.from_array(nominal.as_array() * factors)


def _draw_fault(fault_mix: Mapping[FaultMode, float], rng: CounterRng) -> FaultMode:
    u = float(rng.uniform(1)[0])
    acc = 0.0
    for mode in FaultMode:
        acc += fault_mix.get(mode, 0.0)
        if u < acc:
            return mode
    return FaultMode.NONE


MAX_ATTEMPTS_PER_CYCLE = 1000


def generate_dataset(
    config: SimulatorConfig,
    n: int,
    target_mix: tuple[float, float] = (0.4, 0.6),
    base_seed: int = 0,
    source: Source = Source.SYNTHETIC,
    name: Optional[str] = None,
) -> Dataset:
    """Generate `n` labeled cycles hitting the requested class mix exactly.

    Class counts are met by rejection sampling over jitter and fault draws
    (labels always come from the simulated quality indicators, never from
    relabeling), with at most 1000 attempts per cycle. Per-cycle seeds are
    ``base_seed XOR cycle_index``, so the result is deterministic.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    good_frac, notgood_frac = target_mix
    if abs(good_frac + notgood_frac - 1.0) > 1e-12:
        raise ValueError(f"target mix must sum to 1, got {target_mix}")

    need_good = round_half_away(n * good_frac)
    need_notgood = n - need_good
    prefix = "syn" if source is Source.SYNTHETIC else "real"
    records = []
    for i in range(n):
        cycle_seed = (base_seed ^ i) & MASK64
        for attempt in range(MAX_ATTEMPTS_PER_CYCLE):
            draw_rng = CounterRng(mix64(cycle_seed, attempt))
            setpoints = _jitter_setpoints(
                config.nominal_setpoints, config.jitter, draw_rng
            )
            fault = _draw_fault(config.fault_mix, draw_rng)
            record, quality = simulate_cycle(
                setpoints, fault, config, seed=mix64(cycle_seed, attempt, 1), source=source
            )
            label = label_cycle(quality, config.label_thresholds)
            wanted = (label is Label.GOOD and need_good > 0) or (
                label is Label.NOT_GOOD and need_notgood > 0
            )
            if wanted:
                if label is Label.GOOD:
                    need_good -= 1
                else:
                    need_notgood -= 1
                records.append(
                    dataclasses.replace(
                        record, cycle_id=f"{prefix}-{i:05d}", label=label
                    )
                )
                break
        else:
            raise RuntimeError(
                f"could not reach target class mix within "
                f"{MAX_ATTEMPTS_PER_CYCLE} attempts for cycle {i}"
            )

    return Dataset(
        name=name or f"{prefix}-{n}",
        schema=CANONICAL_SCHEMA,
        records=tuple(records),
    )
