"""Bit-exact persistence of cycles, datasets, and manifests.

Cycles are stored one CSV per cycle (UTF-8, LF, header row of the 34
canonical feature names, floats rendered with shortest round-trip
precision). A dataset directory holds `manifest.json` plus a `cycles/`
subdirectory; the manifest carries labels, sources, sample periods, and
optional quality indicators so that loading reconstructs the dataset
exactly. Writing the same dataset twice produces byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .schema import (
    CANONICAL_SCHEMA,
    CycleRecord,
    Dataset,
    FeatureSchema,
    Label,
    ProcessSetpoints,
    QualityIndicators,
    Source,
)

__all__ = [
    "StorageError",
    "SchemaMismatchError",
    "DatasetManifest",
    "ManifestEntry",
    "write_cycle",
    "read_cycle",
    "write_manifest",
    "read_manifest",
]

MANIFEST_NAME = "manifest.json"
CYCLES_DIR = "cycles"


class StorageError(RuntimeError):
    pass


class SchemaMismatchError(StorageError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    cycle_id: str
    path: str
    label: Label
    source: Source
    sample_period_ms: int
    n_steps: int
    split: Optional[str] = None
    quality: Optional[QualityIndicators] = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    schema_fingerprint: str
    feature_names: tuple[str, ...]
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.cycle_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise StorageError("manifest entries must be unique by cycle_id")


def _format_value(value: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(value))


def write_cycle(record: CycleRecord, path: Path | str) -> None:
    """Write one cycle matrix as CSV with full round-trip precision."""
    path = Path(path)
    header = ",".join(CANONICAL_SCHEMA.names)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for row in record.samples:
                fh.write(",".join(_format_value(v) for v in row) + "\n")
    except OSError as exc:
        raise StorageError(f"failed to write cycle to {path}: {exc}") from exc


def read_cycle(
    path: Path | str,
    schema: FeatureSchema,
    *,
    cycle_id: Optional[str] = None,
    label: Optional[Label] = None,
    source: Source = Source.REAL,
    sample_period_ms: int = 10,
    quality: Optional[QualityIndicators] = None,
) -> CycleRecord:
    """Read a cycle CSV; metadata (label, source, period) comes from the
    caller, normally the manifest. Parse errors cite line and column."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"failed to read cycle from {path}: {exc}") from exc
    if not lines:
        raise StorageError(f"{path}: empty file")

    header = tuple(lines[0].split(","))
    if header != schema.names:
        missing = [n for n in schema.names if n not in header]
        extra = [n for n in header if n not in schema.names]
        detail = []
        if missing:
            detail.append(f"missing columns: {', '.join(missing)}")
        if extra:
            detail.append(f"unexpected columns: {', '.join(extra)}")
        if not detail:
            detail.append("columns are out of canonical order")
        raise SchemaMismatchError(f"{path}: header mismatch ({'; '.join(detail)})")

    n_cols = len(schema.names)
    rows = np.empty((len(lines) - 1, n_cols), dtype=np.float64)
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise StorageError(
                f"{path}: line {line_no}: expected {n_cols} cells, got {len(cells)}"
            )
        for col, cell in enumerate(cells):
            try:
                rows[line_no - 2, col] = float(cell)
            except ValueError as exc:
                raise StorageError(
                    f"{path}: line {line_no}, column {col + 1} "
                    f"({schema.names[col]}): invalid number {cell!r}"
                ) from exc

    setpoint_values = [rows[0, i] for i in schema.setpoint_indices]
    return CycleRecord(
        cycle_id=cycle_id or path.stem,
        source=source,
        label=label,
        sample_period_ms=sample_period_ms,
        samples=rows,
        setpoints=ProcessSetpoints.from_array(setpoint_values),
        quality=quality,
    )


def _entry_to_dict(entry: ManifestEntry) -> dict:
    out: dict = {
        "cycle_id": entry.cycle_id,
        "path": entry.path,
        "label": entry.label.value,
        "source": entry.source.value,
        "sample_period_ms": entry.sample_period_ms,
        "n_steps": entry.n_steps,
    }
    if entry.split is not None:
        out["split"] = entry.split
    if entry.quality is not None:
        out["quality"] = {
            "fill_fraction": entry.quality.fill_fraction,
            "peak_cavity_pressure": entry.quality.peak_cavity_pressure,
            "min_cushion": entry.quality.min_cushion,
        }
    return out


def _entry_from_dict(raw: Mapping) -> ManifestEntry:
    quality = None
    if "quality" in raw:
        q = raw["quality"]
        quality = QualityIndicators(
            fill_fraction=float(q["fill_fraction"]),
            peak_cavity_pressure=float(q["peak_cavity_pressure"]),
            min_cushion=float(q["min_cushion"]),
        )
    return ManifestEntry(
        cycle_id=str(raw["cycle_id"]),
        path=str(raw["path"]),
        label=Label.from_name(raw["label"]),
        source=Source.from_name(raw["source"]),
        sample_period_ms=int(raw["sample_period_ms"]),
        n_steps=int(raw["n_steps"]),
        split=raw.get("split"),
        quality=quality,
    )


def write_manifest(
    dataset: Dataset,
    directory: Path | str,
    split_tags: Optional[Mapping[str, str]] = None,
) -> DatasetManifest:
    """Persist a dataset: one CSV per cycle plus `manifest.json`.

    Output is byte-stable: manifest keys are sorted, no timestamps are
    embedded, and cycles are written in dataset order.
    """
    directory = Path(directory)
    cycles_dir = directory / CYCLES_DIR
    cycles_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for record in dataset.records:
        if record.label is None:
            raise StorageError(f"record {record.cycle_id} has no label")
        rel_path = f"{CYCLES_DIR}/{record.cycle_id}.csv"
        write_cycle(record, directory / rel_path)
        entries.append(
            ManifestEntry(
                cycle_id=record.cycle_id,
                path=rel_path,
                label=record.label,
                source=record.source,
                sample_period_ms=record.sample_period_ms,
                n_steps=record.n_steps,
                split=(split_tags or {}).get(record.cycle_id),
                quality=record.quality,
            )
        )

    manifest = DatasetManifest(
        name=dataset.name,
        schema_fingerprint=dataset.schema.fingerprint(),
        feature_names=dataset.schema.names,
        entries=tuple(entries),
    )
    payload = {
        "name": manifest.name,
        "schema_fingerprint": manifest.schema_fingerprint,
        "feature_names": list(manifest.feature_names),
        "entries": [_entry_to_dict(e) for e in manifest.entries],
    }
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(directory: Path | str, schema: Optional[FeatureSchema] = None) -> Dataset:
    """Load a dataset directory back into memory, exactly as written."""
    schema = schema or CANONICAL_SCHEMA
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise StorageError(f"failed to read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StorageError(f"{manifest_path}: invalid JSON: {exc}") from exc

    fingerprint = payload.get("schema_fingerprint")
    if fingerprint != schema.fingerprint():
        raise SchemaMismatchError(
            f"{manifest_path}: schema fingerprint {fingerprint!r} does not match "
            f"the expected canonical schema {schema.fingerprint()!r}"
        )

    records = []
    for raw in payload.get("entries", []):
        entry = _entry_from_dict(raw)
        cycle_path = directory / entry.path
        if not cycle_path.is_file():
            raise StorageError(
                f"manifest references missing file for cycle {entry.cycle_id}: "
                f"{cycle_path}"
            )
        records.append(
            read_cycle(
                cycle_path,
                schema,
                cycle_id=entry.cycle_id,
                label=entry.label,
                source=entry.source,
                sample_period_ms=entry.sample_period_ms,
                quality=entry.quality,
            )
        )
    return Dataset(name=payload.get("name", directory.name), schema=schema, records=tuple(records))
