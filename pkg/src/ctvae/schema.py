"""Tabular data model: column schema, CSV ingestion, and grouped splits.

A schema partitions columns into target columns (what the generator must
synthesize) and condition columns (what parameterizes generation), each
either continuous or discrete. Datasets are immutable row tables carrying a
group key that identifies which product a row belongs to; train/test splits
are taken at the group level so test conditions are unseen during training.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

KINDS = ("continuous", "discrete")
ROLES = ("target", "condition")

Row = dict[str, object]


@dataclass(frozen=True)
class ColumnSpec:
    """One column: its name, kind (continuous/discrete) and role (target/condition)."""

    name: str
    kind: str
    role: str
    vocabulary: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise ValidationError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind == "continuous" and self.vocabulary is not None:
            raise ValidationError(
                f"column {self.name!r}: continuous columns carry no vocabulary"
            )
        if self.vocabulary is not None:
            if len(self.vocabulary) == 0:
                raise ValidationError(f"column {self.name!r}: empty vocabulary")
            if len(set(self.vocabulary)) != len(self.vocabulary):
                raise ValidationError(f"column {self.name!r}: duplicate vocabulary entries")


@dataclass(frozen=True)
class Schema:
    """Ordered column specs plus the group-key column name.

    The group key identifies the product a row belongs to. It may be one of
    the schema columns or an extra identifier column that is present in the
    CSV but not modeled.
    """

    columns: tuple[ColumnSpec, ...]
    group_key: str

    def __post_init__(self) -> None:
        if not self.columns:
            raise ValidationError("schema has no columns")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate column names: {dupes}")
        if not self.group_key:
            raise ValidationError("schema has no group_key")

    def __iter__(self) -> Iterator[ColumnSpec]:
        return iter(self.columns)

    def __len__(self) -> int:
        return len(self.columns)

    def __getitem__(self, i: int) -> ColumnSpec:
        return self.columns[i]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def target_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == "target")

    @property
    def condition_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == "condition")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise ValidationError(f"unknown column {name!r}")

    @property
    def csv_columns(self) -> tuple[str, ...]:
        """Column order used in CSV files: group key first when it is not modeled."""
        if self.group_key in self.names:
            return self.names
        return (self.group_key,) + self.names


@dataclass(frozen=True)
class Dataset:
    """Immutable row table conforming to a schema.

    Each row is a mapping from column name to value: float for continuous
    columns, str for discrete ones, plus the group-key value when the group
    key is not itself a schema column.
    """

    schema: Schema
    rows: tuple[Row, ...]

    def __post_init__(self) -> None:
        needed = set(self.schema.names) | {self.schema.group_key}
        for i, row in enumerate(self.rows):
            missing = needed - row.keys()
            if missing:
                raise ValidationError(f"row {i + 1} is missing columns: {sorted(missing)}")

    @property
    def group_key(self) -> str:
        return self.schema.group_key

    @property
    def n(self) -> int:
        return len(self.rows)

    def column_values(self, name: str) -> list[object]:
        return [row[name] for row in self.rows]

    def groups(self) -> list[object]:
        """Distinct group-key values in first-appearance order."""
        seen: dict[object, None] = {}
        for row in self.rows:
            seen.setdefault(row[self.group_key], None)
        return list(seen)

    def rows_of_group(self, group: object) -> tuple[Row, ...]:
        return tuple(r for r in self.rows if r[self.group_key] == group)


@dataclass(frozen=True)
class SplitResult:
    train: Dataset
    test: Dataset
    seed: int


def load_schema(path: str | Path) -> Schema:
    """Load a schema description file.

    The file is JSON with a top-level ``group_key`` and a ``columns`` list of
    ``{"name", "kind": "continuous"|"discrete", "role": "target"|"condition"}``
    entries, in column order.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"schema file {path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"schema file {path}: top level must be an object")
    group_key = doc.get("group_key")
    if not isinstance(group_key, str) or not group_key:
        raise ParseError(f"schema file {path}: field 'group_key' missing or not a string")
    raw_columns = doc.get("columns")
    if not isinstance(raw_columns, list):
        raise ParseError(f"schema file {path}: field 'columns' missing or not a list")
    if not raw_columns:
        raise ValidationError(f"schema file {path}: empty column list")

    columns: list[ColumnSpec] = []
    allowed = {"name", "kind", "role", "vocabulary"}
    for i, entry in enumerate(raw_columns):
        where = f"schema file {path}: columns[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: entry must be an object")
        unknown = set(entry) - allowed
        if unknown:
            raise ParseError(f"{where}: unknown field {sorted(unknown)[0]!r}")
        for field in ("name", "kind", "role"):
            if not isinstance(entry.get(field), str):
                raise ParseError(f"{where}: field {field!r} missing or not a string")
        if entry["kind"] not in KINDS:
            raise ParseError(f"{where}: field 'kind' must be one of {KINDS}")
        if entry["role"] not in ROLES:
            raise ParseError(f"{where}: field 'role' must be one of {ROLES}")
        vocab = entry.get("vocabulary")
        if vocab is not None:
            if not isinstance(vocab, list) or not all(isinstance(v, str) for v in vocab):
                raise ParseError(f"{where}: field 'vocabulary' must be a list of strings")
            vocab = tuple(vocab)
        columns.append(
            ColumnSpec(name=entry["name"], kind=entry["kind"], role=entry["role"], vocabulary=vocab)
        )
    return Schema(columns=tuple(columns), group_key=group_key)


def save_schema(schema: Schema, path: str | Path) -> None:
    doc = {
        "group_key": schema.group_key,
        "columns": [
            {"name": c.name, "kind": c.kind, "role": c.role}
            | ({"vocabulary": list(c.vocabulary)} if c.vocabulary is not None else {})
            for c in schema.columns
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _parse_cell(value: str, col: ColumnSpec, row_index: int) -> object:
    if col.kind == "continuous":
        try:
            parsed = float(value)
        except ValueError:
            raise ParseError(
                f"row {row_index}: column {col.name!r}: cannot parse {value!r} as a number"
            ) from None
        if not math.isfinite(parsed):
            raise ParseError(f"row {row_index}: column {col.name!r}: non-finite value {value!r}")
        return parsed
    if value == "":
        raise ParseError(f"row {row_index}: column {col.name!r}: missing value")
    return value


def ingest_table(path: str | Path, schema: Schema) -> Dataset:
    """Load an RFC-4180 CSV whose header matches the schema.

    Continuous cells are parsed as finite 64-bit reals, discrete cells are
    kept as text, and row order is preserved. Missing cells are rejected, not
    imputed.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        expected = set(schema.names) | {schema.group_key}
        missing = expected - set(header)
        if missing:
            raise SchemaError(f"{path}: header is missing columns: {sorted(missing)}")
        extra = set(header) - expected
        if extra:
            raise SchemaError(f"{path}: header has unknown columns: {sorted(extra)}")
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: header has duplicate columns")

        col_by_name = {c.name: c for c in schema.columns}
        rows: list[Row] = []
        for row_index, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise ParseError(
                    f"row {row_index}: expected {len(header)} fields, got {len(record)}"
                )
            row: Row = {}
            for name, value in zip(header, record):
                col = col_by_name.get(name)
                if col is None:
                    # group-key identifier column outside the modeled schema
                    if value == "":
                        raise ParseError(f"row {row_index}: column {name!r}: missing value")
                    row[name] = value
                else:
                    row[name] = _parse_cell(value, col, row_index)
            rows.append(row)

    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(schema=schema, rows=tuple(rows))


def _format_cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset back to CSV; ``ingest_table`` of the result is the identity."""
    names = data.schema.csv_columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in data.rows:
            writer.writerow([_format_cell(row[name]) for name in names])


def split_by_group(data: Dataset, test_group_count: int, seed: int) -> SplitResult:
    """Assign whole groups to test uniformly at random; the rest train.

    Every row of a selected group goes to the test side, so the train/test
    group sets are disjoint and the row multisets union to the input.
    """
    groups = data.groups()
    if test_group_count >= len(groups):
        raise ValueError(
            f"test_group_count={test_group_count} must be below the "
            f"group count {len(groups)}"
        )
    if test_group_count < 0:
        raise ValueError("test_group_count must be non-negative")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(groups), size=test_group_count, replace=False)
    test_groups = {groups[int(i)] for i in chosen}
    train_rows = tuple(r for r in data.rows if r[data.group_key] not in test_groups)
    test_rows = tuple(r for r in data.rows if r[data.group_key] in test_groups)
    return SplitResult(
        train=Dataset(schema=data.schema, rows=train_rows),
        test=Dataset(schema=data.schema, rows=test_rows),
        seed=seed,
    )


def validation_split(train: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Row-level random split into (fit, val) with |val| = round(fraction * N).

    Rounding is half-away-from-zero. Deterministic under ``seed``; row order
    within each side is preserved.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if train.n < 2:
        raise ValueError("need at least 2 rows to split")
    n_val = int(math.floor(fraction * train.n + 0.5))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(train.n, size=n_val, replace=False)
    val_index = set(int(i) for i in chosen)
    fit_rows = tuple(r for i, r in enumerate(train.rows) if i not in val_index)
    val_rows = tuple(r for i, r in enumerate(train.rows) if i in val_index)
    return (
        Dataset(schema=train.schema, rows=fit_rows),
        Dataset(schema=train.schema, rows=val_rows),
    )


def dataset_from_records(schema: Schema, records: Sequence[Mapping[str, object]]) -> Dataset:
    """Build a dataset from in-memory records, with the same cell validation as ingest."""
    col_by_name = {c.name: c for c in schema.columns}
    rows: list[Row] = []
    for row_index, record in enumerate(records, start=1):
        row: Row = {}
        for name, value in record.items():
            col = col_by_name.get(name)
            if col is None:
                row[name] = value
            elif col.kind == "continuous":
                parsed = float(value)  # type: ignore[arg-type]
                if not math.isfinite(parsed):
                    raise ParseError(f"row {row_index}: column {name!r}: non-finite value")
                row[name] = parsed
            else:
                row[name] = str(value)
        rows.append(row)
    return Dataset(schema=schema, rows=tuple(rows))
