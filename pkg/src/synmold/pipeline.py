"""Dataset augmentation, real-data splitting, and synthetic mixing.

Augmentation quadruples a dataset by stride-4 phase-offset decimation of
each cycle's time series; splitting carves a real-only validation set with
a seeded shuffle; the two mixing protocols either add synthetic cycles on
top of the real training set or substitute them while holding the training
set size constant.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

from .rng import CounterRng, mix64
from .schema import CycleRecord, Dataset, Label, Source, round_half_away

__all__ = [
    "SplitSpec",
    "MixMode",
    "MixAccounting",
    "decimate_augment",
    "augment_dataset",
    "split_real",
    "mix_additive",
    "mix_substitutive",
]


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.33
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


class MixMode(Enum):
    ADDITIVE = "additive"
    SUBSTITUTIVE = "substitutive"

    @classmethod
    def from_name(cls, name: str) -> "MixMode":
        for member in cls:
            if member.value == name.lower():
                return member
        raise ValueError(f"unknown mix mode {name!r}")


@dataclass(frozen=True)
class MixAccounting:
    """Bookkeeping for one mixed training set.

    ``synthetic_fraction_training`` is the synthetic count over the real
    training-set size (additive) or over the fixed set size (substitutive),
    which is the convention the sweep report columns use.
    """

    mode: MixMode
    level: float
    real_count: int
    synthetic_count: int
    training_count: int
    total_count: int
    synthetic_fraction_training: float

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "level": self.level,
            "real_count": self.real_count,
            "synthetic_count": self.synthetic_count,
            "training_count": self.training_count,
            "total_count": self.total_count,
            "synthetic_fraction_training": self.synthetic_fraction_training,
        }


def decimate_augment(record: CycleRecord, factor: int = 4) -> list[CycleRecord]:
    """Split one cycle into `factor` stride-decimated cycles.

    Output k keeps rows k, k+factor, k+2*factor, ... of the input, at
    `factor` times the input sample period. Interleaving the outputs by
    phase offset reconstructs the original matrix exactly.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n_rows = record.samples.shape[0]
    # every output must itself be a valid cycle (at least 2 rows)
    if n_rows < 2 * factor:
        raise ValueError(
            f"cannot decimate a {n_rows}-step cycle by factor {factor}: "
            f"need at least {2 * factor} steps"
        )
    out = []
    for k in range(factor):
        out.append(
            dataclasses.replace(
                record,
                cycle_id=f"{record.cycle_id}-p{k}",
                sample_period_ms=record.sample_period_ms * factor,
                samples=record.samples[k::factor].copy(),
            )
        )
    return out


def augment_dataset(dataset: Dataset, factor: int = 4) -> Dataset:
    """Decimate every record; |output| = factor * |input|, cycle order kept."""
    records = []
    for record in dataset.records:
        records.extend(decimate_augment(record, factor))
    return Dataset(
        name=f"{dataset.name}-x{factor}",
        schema=dataset.schema,
        records=tuple(records),
    )


def split_real(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition a real-only dataset into (train, val) by seeded shuffle.

    |val| = round(val_fraction * |dataset|) with half-away-from-zero
    rounding; the validation set must stay real-only, so any synthetic
    record in the input is an error.
    """
    for record in dataset.records:
        if record.source is not Source.REAL:
            raise ValueError(
                f"split_real requires real-only input; {record.cycle_id} "
                f"has source {record.source.value}"
            )
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    n_val = round_half_away(spec.val_fraction * n)
    n_val = min(max(n_val, 1), n - 1)
    order = CounterRng(spec.seed).permutation(n)
    val_records = tuple(dataset.records[i] for i in order[:n_val])
    train_records = tuple(dataset.records[i] for i in order[n_val:])
    train = Dataset(f"{dataset.name}-train", dataset.schema, train_records)
    val = Dataset(f"{dataset.name}-val", dataset.schema, val_records)
    return train, val


def _stratified_sample(
    pool: Dataset, count: int, seed: int
) -> tuple[CycleRecord, ...]:
    """Sample `count` records from the pool, stratified to its class mix."""
    if count == 0:
        return ()
    if count > len(pool):
        raise ValueError(
            f"synthetic pool has {len(pool)} records, need {count}"
        )
    good_idx = [i for i, r in enumerate(pool.records) if r.label is Label.GOOD]
    notgood_idx = [i for i, r in enumerate(pool.records) if r.label is Label.NOT_GOOD]
    n_good = round_half_away(count * len(good_idx) / len(pool))
    n_good = min(n_good, len(good_idx))
    n_notgood = count - n_good
    if n_notgood > len(notgood_idx):
        n_notgood = len(notgood_idx)
        n_good = count - n_notgood
        if n_good > len(good_idx):
            raise ValueError(
                f"pool class counts ({len(good_idx)} Good, {len(notgood_idx)} "
                f"NotGood) cannot supply {count} stratified records"
            )
    rng = CounterRng(seed)
    picked = [good_idx[i] for i in rng.sample_without_replacement(len(good_idx), n_good)]
    picked += [
        notgood_idx[i]
        for i in rng.spawn(1).sample_without_replacement(len(notgood_idx), n_notgood)
    ]
    return tuple(pool.records[i] for i in sorted(picked))


def mix_additive(
    real_train: Dataset,
    synthetic_pool: Dataset,
    percent: float,
    real_total: int = 1100,
    seed: int = 0,
) -> tuple[Dataset, MixAccounting]:
    """Add round(percent/100 * real_total) synthetic cycles to the real
    training set; the synthetic draw is class-stratified to the pool's mix."""
    if not 0.0 <= percent <= 100.0:
        raise ValueError(f"percent must be in [0, 100], got {percent}")
    synthetic_count = round_half_away(percent / 100.0 * real_total)
    sampled = _stratified_sample(synthetic_pool, synthetic_count, seed)
    records = real_train.records + sampled
    train = Dataset(
        f"{real_train.name}-add{percent:g}", real_train.schema, records
    )
    accounting = MixAccounting(
        mode=MixMode.ADDITIVE,
        level=percent,
        real_count=len(real_train),
        synthetic_count=synthetic_count,
        training_count=len(records),
        total_count=real_total + synthetic_count,
        synthetic_fraction_training=synthetic_count / len(real_train),
    )
    return train, accounting


def mix_substitutive(
    real_train: Dataset,
    synthetic_pool: Dataset,
    synthetic_count: int,
    fixed_size: int = 737,
    seed: int = 0,
) -> tuple[Dataset, MixAccounting]:
    """Build a training set of exactly `fixed_size` records: a seeded sample
    of real cycles topped up with a stratified synthetic sample."""
    if synthetic_count < 0 or synthetic_count > fixed_size:
        raise ValueError(
            f"synthetic_count must be in [0, {fixed_size}], got {synthetic_count}"
        )
    n_real = fixed_size - synthetic_count
    if n_real > len(real_train):
        raise ValueError(
            f"need {n_real} real records but the training set has {len(real_train)}"
        )
    rng = CounterRng(mix64(seed, 2))
    real_picked = sorted(rng.sample_without_replacement(len(real_train), n_real))
    real_records = tuple(real_train.records[i] for i in real_picked)
    sampled = _stratified_sample(synthetic_pool, synthetic_count, seed)
    records = real_records + sampled
    train = Dataset(
        f"{real_train.name}-sub{synthetic_count}", real_train.schema, records
    )
    accounting = MixAccounting(
        mode=MixMode.SUBSTITUTIVE,
        level=synthetic_count,
        real_count=n_real,
        synthetic_count=synthetic_count,
        training_count=fixed_size,
        total_count=fixed_size,
        synthetic_fraction_training=synthetic_count / fixed_size,
    )
    return train, accounting
