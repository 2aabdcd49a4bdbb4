"""Conditional generation and distribution summaries for what-if comparison.

A condition is a base product's attribute mapping with a partial override
mapping on top; it compiles to a single conditioning vector. Generation draws
each synthetic row from its own counter-based random stream, so batches are
deterministic under (model, condition, seed, n) and growing n extends a
smaller batch instead of reshuffling it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import EncodingError, ParseError, ValidationError
from .model import ModelParams, decode, model_fingerprint
from .rng import row_stream
from .schema import Row, Schema
from .transform import (
    ContinuousTransform,
    DiscreteTransform,
    TransformBundle,
    decode_target,
)



@dataclass(frozen=True)
class ConditionSpec:
    """Base condition-column values plus overrides; merged covers every condition column."""

    base: dict[str, object]
    overrides: dict[str, object]

    @property
    def merged(self) -> dict[str, object]:
        return {**self.base, **self.overrides}


@dataclass(frozen=True)
class Provenance:
    model_id: str
    condition: ConditionSpec
    seed: int
    n: int


@dataclass(frozen=True)
class ColumnSummarySpec:
    """Per-target-column metadata carried on a batch for summary defaults."""

    name: str
    kind: str
    vocabulary: tuple[str, ...] | None = None
    value_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class SyntheticBatch:
    rows: tuple[Row, ...]
    provenance: Provenance
    columns: tuple[ColumnSummarySpec, ...]

    @property
    def n(self) -> int:
        return len(self.rows)

    def column_spec(self, name: str) -> ColumnSummarySpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise ValueError(f"unknown target column {name!r}")


@dataclass(frozen=True)
class DistributionSummary:
    """Relative frequencies of one column over a batch.

    Discrete: one frequency per category. Continuous: equal-width bins (the
    raw values are kept alongside).
    """

    column: str
    kind: str
    labels: tuple[str, ...]
    frequencies: np.ndarray
    bin_edges: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if abs(float(self.frequencies.sum()) - 1.0) > 1e-9:
            raise ValidationError("summary frequencies must sum to 1")
        if len(self.labels) != len(self.frequencies):
            raise ValidationError("labels and frequencies must align")

    def as_mapping(self) -> dict[str, float]:
        return {label: float(f) for label, f in zip(self.labels, self.frequencies)}


@dataclass(frozen=True)
class SummaryDelta:
    column: str
    labels: tuple[str, ...]
    deltas: np.ndarray

    def as_mapping(self) -> dict[str, float]:
        return {label: float(d) for label, d in zip(self.labels, self.deltas)}


def build_condition(
    base_row: Mapping[str, object],
    overrides: Mapping[str, object],
    bundle: TransformBundle,
) -> tuple[ConditionSpec, np.ndarray]:
    """Merge base and overrides and compile the conditioning vector.

    The base row must supply every condition column; overrides may only name
    condition columns and must be encodable by the fitted bundle. Continuous
    condition values take their most responsible mode, so a condition always
    compiles to the same vector.
    """
    condition_names = [c.name for c in bundle.schema.condition_columns]
    for key in overrides:
        if key not in condition_names:
            raise ValueError(f"override of non-condition column {key!r}")
    missing = [name for name in condition_names if name not in base_row]
    if missing:
        raise ValueError(f"base row is missing condition columns: {missing}")

    base = {name: base_row[name] for name in condition_names}
    spec = ConditionSpec(base=base, overrides=dict(overrides))
    x_c = encode_condition(spec, bundle)
    return spec, x_c


def encode_condition(spec: ConditionSpec, bundle: TransformBundle) -> np.ndarray:
    merged = spec.merged
    x_c = np.zeros(bundle.condition_dim)
    for name, offset, width in bundle.condition_layout:
        t = bundle.transforms[name]
        if isinstance(t, ContinuousTransform):
            value = float(merged[name])  # type: ignore[arg-type]
            if not math.isfinite(value):
                raise EncodingError(f"column {name!r}: non-finite condition value")
            from .transform import encode_continuous

            x_c[offset : offset + width] = encode_continuous(value, t, rng=None)
        else:
            from .transform import encode_discrete

            x_c[offset : offset + width] = encode_discrete(str(merged[name]), t)
    return x_c


def _column_specs(bundle: TransformBundle) -> tuple[ColumnSummarySpec, ...]:
    specs = []
    for col in bundle.schema.target_columns:
        t = bundle.transforms[col.name]
        if isinstance(t, DiscreteTransform):
            specs.append(ColumnSummarySpec(name=col.name, kind="discrete", vocabulary=t.vocabulary))
        else:
            specs.append(
                ColumnSummarySpec(
                    name=col.name,
                    kind="continuous",
                    value_range=(t.value_min, t.value_max),
                )
            )
    return tuple(specs)


def generate(
    m: ModelParams,
    c: ConditionSpec,
    n: int,
    seed: int,
    policy: str = "stochastic",
) -> SyntheticBatch:
    """Draw n synthetic target rows conditioned on c.

    Row i consumes only stream (seed, i): first its latent noise, then its
    per-column categorical draws, so rows are i.i.d. given the seed and the
    batch is a pure function of (model, condition, seed, n).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    bundle = m.bundle
    x_c = encode_condition(c, bundle)
    provenance = Provenance(model_id=model_fingerprint(m), condition=c, seed=seed, n=n)
    columns = _column_specs(bundle)

    # Row-at-a-time decoding: each row's floating-point path is then identical
    # no matter how many rows are requested, which the prefix-extension
    # guarantee needs (batched BLAS results vary bitwise with batch shape).
    rows: list[Row] = []
    latent = m.arch.latent_dim
    for i in range(n):
        stream = row_stream(seed, i)
        noise = stream.standard_normal(latent)
        blocks = decode(m, noise, x_c)
        rows.append(decode_target(blocks, bundle, policy=policy, rng=stream))
    return SyntheticBatch(rows=tuple(rows), provenance=provenance, columns=columns)


def summarize(b: SyntheticBatch, column: str, bins: int = 10) -> DistributionSummary:
    """Relative-frequency summary of one target column.

    Discrete columns are summarized over the full vocabulary (absent
    categories get frequency 0). Continuous columns use `bins` equal-width
    bins over the column's training range when known, else the batch range;
    out-of-range values land in the edge bins.
    """
    spec = b.column_spec(column)
    if b.n == 0:
        raise ValueError("cannot summarize an empty batch")
    values = [row[column] for row in b.rows]
    if spec.kind == "discrete":
        vocab = spec.vocabulary or tuple(sorted({str(v) for v in values}))
        counts = {cat: 0 for cat in vocab}
        for v in values:
            key = str(v)
            if key not in counts:
                raise ValueError(f"value {key!r} outside summary categories for {column!r}")
            counts[key] += 1
        freqs = np.array([counts[cat] for cat in vocab], dtype=np.float64) / len(values)
        return DistributionSummary(column=column, kind="discrete", labels=vocab, frequencies=freqs)

    arr = np.asarray(values, dtype=np.float64)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = spec.value_range if spec.value_range is not None else (float(arr.min()), float(arr.max()))
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.clip(arr, lo, hi), bins=edges)
    freqs = counts.astype(np.float64) / len(arr)
    labels = tuple(f"[{edges[i]:.6g}, {edges[i + 1]:.6g})" for i in range(bins))
    return DistributionSummary(
        column=column,
        kind="continuous",
        labels=labels,
        frequencies=freqs,
        bin_edges=edges,
        values=arr,
    )


def compare(a: DistributionSummary, b: DistributionSummary) -> SummaryDelta:
    """Per-entry change b - a; entries sum to zero."""
    if a.column != b.column:
        raise ValueError(f"summaries compare different columns: {a.column!r} vs {b.column!r}")
    if a.labels != b.labels:
        raise ValueError(f"column {a.column!r}: category/bin structures differ")
    if a.bin_edges is not None and b.bin_edges is not None:
        if not np.array_equal(a.bin_edges, b.bin_edges):
            raise ValueError(f"column {a.column!r}: bin edges differ")
    return SummaryDelta(column=a.column, labels=a.labels, deltas=b.frequencies - a.frequencies)


# ---------------------------------------------------------------------------
# Batch CSV round trip (CLI surface)
# ---------------------------------------------------------------------------


def write_batch_csv(b: SyntheticBatch, path: str | Path) -> None:
    names = [c.name for c in b.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in b.rows:
            writer.writerow(
                [repr(row[n]) if isinstance(row[n], float) else str(row[n]) for n in names]
            )


def read_target_rows(path: str | Path, schema: Schema) -> list[Row]:
    """Read a CSV of target columns only (as written by generation)."""
    targets = {c.name: c for c in schema.target_columns}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        unknown = set(header) - set(targets)
        if unknown:
            raise ParseError(f"{path}: columns are not target columns: {sorted(unknown)}")
        missing = set(targets) - set(header)
        if missing:
            raise ParseError(f"{path}: missing target columns: {sorted(missing)}")
        rows: list[Row] = []
        for row_index, record in enumerate(reader, start=1):
            row: Row = {}
            for name, value in zip(header, record):
                if targets[name].kind == "continuous":
                    try:
                        row[name] = float(value)
                    except ValueError:
                        raise ParseError(
                            f"row {row_index}: column {name!r}: cannot parse {value!r}"
                        ) from None
                else:
                    row[name] = value
            rows.append(row)
    return rows
