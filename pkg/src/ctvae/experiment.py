"""End-to-end holdout evaluation: split, fit, conditional generation, scoring.

Products are held out whole; for each test product the model generates
samples conditioned on that product's attribute vector and is scored against
the product's real rows with the KS/TV complements. A preset sweep repeats
the run per architecture width with shared splits and seeds, producing a
comparison table plus figure-ready per-column histogram data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ExperimentError, ValidationError
from .metrics import AggregateScore, ProductScore, aggregate, mean_complement
from .model import ModelParams, TrainConfig, TrainHistory, train
from .rng import derive_seed
from .sampler import build_condition, generate
from .schema import Dataset, Row, Schema, ingest_table, load_schema, split_by_group


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str
    schema_path: str
    test_group_count: int
    samples_per_product: int
    presets: tuple[int, ...]
    seed: int
    output_dir: str
    conditioning: bool = True
    batch_size: int = 500
    max_epochs: int = 150
    patience: int = 10
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.samples_per_product < 1:
            raise ValidationError("samples_per_product must be >= 1")
        if not self.presets:
            raise ValidationError("at least one architecture preset is required")

    def train_config(self, preset: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            learning_rate=self.learning_rate,
            seed=derive_seed(self.seed, "train", preset),
            arch=preset,
            validation_fraction=self.validation_fraction,
        )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    doc["presets"] = tuple(int(p) for p in doc["presets"])
    return ExperimentConfig(**doc)


@dataclass(frozen=True)
class ColumnHistogram:
    """Figure-ready real-vs-synthetic frequency table for one column of one product."""

    product_id: str
    column: str
    kind: str
    buckets: tuple[str, ...]
    real: tuple[float, ...]
    synth: tuple[float, ...]


@dataclass(frozen=True)
class PresetResult:
    preset: int
    aggregate: AggregateScore
    products: tuple[ProductScore, ...]
    history: TrainHistory
    histograms: tuple[ColumnHistogram, ...]


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    code_version: str
    presets: tuple[PresetResult, ...]
    test_products: tuple[str, ...]


@dataclass(frozen=True)
class SweepRow:
    preset: int
    average_mc: float
    weighted_average_mc: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    reports: tuple[ExperimentReport, ...]


def _stage(name: str):
    """Wrap a stage so failures carry the stage name and cause."""

    class _StageGuard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, ExperimentError):
                raise ExperimentError(f"stage {name!r} failed: {exc}") from exc
            return False

    return _StageGuard()


def product_condition_row(rows: Sequence[Row], schema: Schema, product_id: str) -> Row:
    """The condition-attribute mapping of a product; attributes must be constant."""
    condition_names = [c.name for c in schema.condition_columns]
    first = {name: rows[0][name] for name in condition_names}
    for row in rows[1:]:
        for name in condition_names:
            if row[name] != first[name]:
                raise ValidationError(
                    f"product {product_id!r}: condition column {name!r} varies across rows"
                )
    return first


def run_holdout(cfg: ExperimentConfig, data: Dataset | None = None) -> ExperimentReport:
    """Run the full holdout protocol for every preset in the config.

    Splits by product, trains on the training products only (transforms
    included), then for each test product generates `samples_per_product`
    rows under that product's condition vector and scores them against the
    product's real rows.
    """
    with _stage("load"):
        if data is None:
            schema = load_schema(cfg.schema_path)
            data = ingest_table(cfg.data_path, schema)
        schema = data.schema

    with _stage("split"):
        split = split_by_group(data, cfg.test_group_count, derive_seed(cfg.seed, "split"))
        test_products = tuple(str(g) for g in split.test.groups())

    results: list[PresetResult] = []
    for preset in cfg.presets:
        with _stage(f"train[{preset}]"):
            m, history = train(
                split.train, cfg.train_config(preset), conditioning=cfg.conditioning
            )
            _assert_no_leakage(split, m)

        scores: list[ProductScore] = []
        histograms: list[ColumnHistogram] = []
        for product_id in test_products:
            with _stage(f"generate[{preset}:{product_id}]"):
                real_rows = split.test.rows_of_group(_group_value(split.test, product_id))
                base = product_condition_row(real_rows, schema, product_id)
                condition, _ = build_condition(base, {}, m.bundle)
                batch = generate(
                    m,
                    condition,
                    cfg.samples_per_product,
                    derive_seed(cfg.seed, "generate", preset, product_id),
                )
            with _stage(f"score[{preset}:{product_id}]"):
                scores.append(
                    mean_complement(real_rows, batch.rows, schema, product_id=product_id)
                )
                histograms.extend(_column_histograms(real_rows, batch.rows, schema, product_id))
        with _stage(f"aggregate[{preset}]"):
            results.append(
                PresetResult(
                    preset=preset,
                    aggregate=aggregate(scores),
                    products=tuple(scores),
                    history=history,
                    histograms=tuple(histograms),
                )
            )

    return ExperimentReport(
        config=cfg,
        code_version=__version__,
        presets=tuple(results),
        test_products=test_products,
    )


def _group_value(data: Dataset, product_id: str):
    for g in data.groups():
        if str(g) == product_id:
            return g
    raise ExperimentError(f"product {product_id!r} not found in test split")


def _assert_no_leakage(split, m: ModelParams) -> None:
    train_groups = {str(g) for g in split.train.groups()}
    test_groups = {str(g) for g in split.test.groups()}
    leaked = train_groups & test_groups
    if leaked:
        raise ExperimentError(f"test products leaked into training: {sorted(leaked)}")


def dimension_sweep(cfg: ExperimentConfig, presets: Sequence[int]) -> SweepTable:
    """One holdout run per preset with shared splits and seeds."""
    if not presets:
        raise ValidationError("presets must be non-empty")
    rows: list[SweepRow] = []
    reports: list[ExperimentReport] = []
    for preset in presets:
        sub = ExperimentConfig(
            **{
                **cfg.__dict__,
                "presets": (preset,),
            }
        )
        report = run_holdout(sub)
        result = report.presets[0]
        rows.append(
            SweepRow(
                preset=preset,
                average_mc=result.aggregate.average_mc,
                weighted_average_mc=result.aggregate.weighted_average_mc,
            )
        )
        reports.append(report)
    return SweepTable(rows=tuple(rows), reports=tuple(reports))


# ---------------------------------------------------------------------------
# Report serialization and emission
# ---------------------------------------------------------------------------


def report_to_dict(r: ExperimentReport) -> dict:
    return {
        "config": {**r.config.__dict__, "presets": list(r.config.presets)},
        "code_version": r.code_version,
        "test_products": list(r.test_products),
        "presets": [
            {
                "preset": p.preset,
                "average_mc": p.aggregate.average_mc,
                "weighted_average_mc": p.aggregate.weighted_average_mc,
                "products": [
                    {
                        "product": s.product_id,
                        "purchase_count": s.purchase_count,
                        "mc": s.mc,
                        "columns": {c.column: c.score for c in s.columns},
                    }
                    for s in p.products
                ],
                "history": {
                    "best_epoch": p.history.best_epoch,
                    "best_val_loss": p.history.best_val_loss,
                    "epochs": [
                        {"epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss}
                        for e in p.history.epochs
                    ],
                },
                "histograms": [
                    {
                        "product": h.product_id,
                        "column": h.column,
                        "kind": h.kind,
                        "buckets": list(h.buckets),
                        "real": list(h.real),
                        "synth": list(h.synth),
                    }
                    for h in p.histograms
                ],
            }
            for p in r.presets
        ],
    }


def report_json(r: ExperimentReport) -> str:
    return json.dumps(report_to_dict(r), sort_keys=True, indent=2) + "\n"


def _column_histograms(
    real_rows: Sequence[Row],
    synth_rows: Sequence[Row],
    schema: Schema,
    product_id: str,
    bins: int = 10,
) -> list[ColumnHistogram]:
    out: list[ColumnHistogram] = []
    for col in schema.target_columns:
        real_vals = [r[col.name] for r in real_rows]
        synth_vals = [r[col.name] for r in synth_rows]
        if col.kind == "discrete":
            cats = sorted({str(v) for v in real_vals} | {str(v) for v in synth_vals})
            nr, ns = len(real_vals), len(synth_vals)
            buckets = tuple(cats)
            real = tuple(sum(1 for v in real_vals if str(v) == c) / nr for c in cats)
            synth = tuple(sum(1 for v in synth_vals if str(v) == c) / ns for c in cats)
        else:
            both = np.asarray([float(v) for v in real_vals] + [float(v) for v in synth_vals])
            lo, hi = float(both.min()), float(both.max())
            if hi <= lo:
                hi = lo + 1.0
            edges = np.linspace(lo, hi, bins + 1)
            hr, _ = np.histogram(np.clip(np.asarray(real_vals, float), lo, hi), bins=edges)
            hs, _ = np.histogram(np.clip(np.asarray(synth_vals, float), lo, hi), bins=edges)
            buckets = tuple(f"[{edges[i]!r},{edges[i + 1]!r})" for i in range(bins))
            real = tuple(float(c) / len(real_vals) for c in hr)
            synth = tuple(float(c) / len(synth_vals) for c in hs)
        out.append(
            ColumnHistogram(
                product_id=product_id,
                column=col.name,
                kind=col.kind,
                buckets=buckets,
                real=real,
                synth=synth,
            )
        )
    return out


def emit_report(r: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write aggregate tables (CSV + JSON), per-product scores, and histogram data.

    Emission is idempotent: the same report writes byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    agg_csv = out / "aggregate.csv"
    with open(agg_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["preset", "average_mc", "weighted_average_mc"])
        for p in r.presets:
            writer.writerow(
                [p.preset, repr(p.aggregate.average_mc), repr(p.aggregate.weighted_average_mc)]
            )
    written.append(agg_csv)

    report_path = out / "report.json"
    report_path.write_text(report_json(r), encoding="utf-8")
    written.append(report_path)

    products_csv = out / "products.csv"
    with open(products_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["preset", "product", "purchase_count", "mc"])
        for p in r.presets:
            for s in p.products:
                writer.writerow([p.preset, s.product_id, s.purchase_count, repr(s.mc)])
    written.append(products_csv)

    columns_csv = out / "columns.csv"
    with open(columns_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["preset", "product", "column", "kind", "score"])
        for p in r.presets:
            for s in p.products:
                for c in s.columns:
                    writer.writerow([p.preset, s.product_id, c.column, c.kind, repr(c.score)])
    written.append(columns_csv)

    hist_dir = out / "histograms"
    hist_dir.mkdir(exist_ok=True)
    for p in r.presets:
        for h in p.histograms:
            path = hist_dir / f"{p.preset}_{h.product_id}_{h.column}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bucket", "real_frequency", "synthetic_frequency"])
                for bucket, fr, fs in zip(h.buckets, h.real, h.synth):
                    writer.writerow([bucket, repr(fr), repr(fs)])
            written.append(path)

    return written
