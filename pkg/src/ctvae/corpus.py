"""Synthetic ground-truth corpora with closed-form conditional distributions.

Real purchase panels are proprietary, so the evaluation pipeline runs on
generated corpora instead: a corpus spec declares products (each a fixed
mapping of condition-column attributes) and, for every target column, the
distribution it follows as a function of one discrete condition column.
Because those conditionals are known exactly, generated data can be scored
against the truth, not just against finite samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .schema import ColumnSpec, Dataset, Schema, save_schema, write_csv


@dataclass(frozen=True)
class DiscreteTruth:
    categories: tuple[str, ...]
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        if len(self.categories) != len(self.probabilities):
            raise ValidationError("categories and probabilities must align")
        if np.any(self.probabilities < 0):
            raise ValidationError("probabilities must be non-negative")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-9:
            raise ValidationError("probabilities must sum to 1")


@dataclass(frozen=True)
class MixtureTruth:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.means) == len(self.stds)):
            raise ValidationError("mixture parameter arrays must align")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValidationError("mixture weights must sum to 1")
        if np.any(self.stds <= 0):
            raise ValidationError("mixture stds must be positive")

    def cdf(self, x: float) -> float:
        z = (x - self.means) / (self.stds * math.sqrt(2.0))
        return float(np.dot(self.weights, 0.5 * (1.0 + np.array([math.erf(v) for v in z]))))

    def sample(self, rng: np.random.Generator) -> float:
        k = int(rng.choice(len(self.weights), p=self.weights))
        return float(rng.normal(self.means[k], self.stds[k]))


Truth = DiscreteTruth | MixtureTruth


@dataclass(frozen=True)
class TargetRule:
    """One target column: its kind and per-condition-value distribution."""

    name: str
    kind: str
    depends_on: str
    distributions: dict[str, Truth]


@dataclass(frozen=True)
class Product:
    product_id: str
    attributes: dict[str, object]
    rows: int | None = None  # per-product override of rows_per_product


@dataclass(frozen=True)
class CorpusSpec:
    group_key: str
    rows_per_product: int
    condition_columns: tuple[ColumnSpec, ...]
    target_rules: tuple[TargetRule, ...]
    products: tuple[Product, ...]

    def schema(self) -> Schema:
        columns = tuple(
            ColumnSpec(name=r.name, kind=r.kind, role="target") for r in self.target_rules
        ) + self.condition_columns
        return Schema(columns=columns, group_key=self.group_key)

    def truth_for(self, product: Product, rule: TargetRule) -> Truth:
        key = str(product.attributes[rule.depends_on])
        return rule.distributions[key]


def _parse_truth(kind: str, raw: Mapping, where: str) -> Truth:
    if kind == "discrete":
        if not isinstance(raw, Mapping) or not raw:
            raise ValidationError(f"{where}: discrete distribution must map category -> probability")
        cats = tuple(str(k) for k in raw)
        return DiscreteTruth(
            categories=cats, probabilities=np.array([float(raw[k]) for k in raw])
        )
    for field in ("weights", "means", "stds"):
        if field not in raw:
            raise ValidationError(f"{where}: continuous distribution missing {field!r}")
    return MixtureTruth(
        weights=np.asarray(raw["weights"], dtype=np.float64),
        means=np.asarray(raw["means"], dtype=np.float64),
        stds=np.asarray(raw["stds"], dtype=np.float64),
    )


def load_corpus_spec(doc: Mapping | str | Path) -> CorpusSpec:
    """Parse a corpus spec from a mapping or a JSON file path."""
    if not isinstance(doc, Mapping):
        doc = json.loads(Path(doc).read_text(encoding="utf-8"))
    try:
        group_key = str(doc["group_key"])
        rows_per_product = int(doc["rows_per_product"])
        raw_conditions = doc["condition_columns"]
        raw_targets = doc["target_columns"]
        raw_products = doc["products"]
    except KeyError as exc:
        raise ValidationError(f"corpus spec missing field {exc.args[0]!r}") from None

    if rows_per_product < 1:
        raise ValidationError("rows_per_product must be >= 1")
    if not raw_products:
        raise ValidationError("corpus spec declares no products")

    condition_columns = tuple(
        ColumnSpec(name=str(c["name"]), kind=str(c["kind"]), role="condition")
        for c in raw_conditions
    )
    condition_names = {c.name for c in condition_columns}

    rules = []
    for raw in raw_targets:
        name, kind = str(raw["name"]), str(raw["kind"])
        depends_on = str(raw["depends_on"])
        if depends_on not in condition_names:
            raise ValidationError(
                f"target {name!r}: depends_on {depends_on!r} is not a condition column"
            )
        dists = {
            str(key): _parse_truth(kind, val, f"target {name!r}, condition value {key!r}")
            for key, val in raw["distributions"].items()
        }
        rules.append(TargetRule(name=name, kind=kind, depends_on=depends_on, distributions=dists))

    products = []
    seen_ids: set[str] = set()
    for raw in raw_products:
        pid = str(raw["id"])
        if pid in seen_ids:
            raise ValidationError(f"duplicate product id {pid!r}")
        seen_ids.add(pid)
        attrs = dict(raw["attributes"])
        missing = condition_names - attrs.keys()
        if missing:
            raise ValidationError(f"product {pid!r}: missing attributes {sorted(missing)}")
        rows = raw.get("rows")
        if rows is not None and int(rows) < 1:
            raise ValidationError(f"product {pid!r}: rows must be >= 1")
        products.append(
            Product(product_id=pid, attributes=attrs, rows=None if rows is None else int(rows))
        )

    spec = CorpusSpec(
        group_key=group_key,
        rows_per_product=rows_per_product,
        condition_columns=condition_columns,
        target_rules=tuple(rules),
        products=tuple(products),
    )
    # every product's depends_on value must have a declared distribution
    for product in spec.products:
        for rule in spec.target_rules:
            key = str(product.attributes[rule.depends_on])
            if key not in rule.distributions:
                raise ValidationError(
                    f"product {product.product_id!r}: no distribution for "
                    f"{rule.name!r} under {rule.depends_on}={key!r}"
                )
    return spec


def sample_corpus(spec: CorpusSpec, seed: int) -> Dataset:
    """Draw the corpus rows; deterministic under (spec, seed)."""
    rng = np.random.default_rng(seed)
    schema = spec.schema()
    rows = []
    for product in spec.products:
        for _ in range(product.rows or spec.rows_per_product):
            row: dict[str, object] = {spec.group_key: product.product_id}
            row.update(product.attributes)
            for rule in spec.target_rules:
                truth = spec.truth_for(product, rule)
                if isinstance(truth, DiscreteTruth):
                    idx = int(rng.choice(len(truth.categories), p=truth.probabilities))
                    row[rule.name] = truth.categories[idx]
                else:
                    row[rule.name] = truth.sample(rng)
            rows.append(row)
    return Dataset(schema=schema, rows=tuple(rows))


def _truth_json(truth: Truth) -> dict:
    if isinstance(truth, DiscreteTruth):
        return {
            "kind": "discrete",
            "categories": list(truth.categories),
            "probabilities": [float(p) for p in truth.probabilities],
        }
    return {
        "kind": "continuous",
        "weights": [float(w) for w in truth.weights],
        "means": [float(m) for m in truth.means],
        "stds": [float(s) for s in truth.stds],
    }


@dataclass(frozen=True)
class CorpusFiles:
    data: Path
    schema: Path
    truth: Path
    catalog: Path


def make_synthetic_corpus(
    spec: CorpusSpec | Mapping | str | Path, seed: int, out_dir: str | Path
) -> CorpusFiles:
    """Emit data.csv, schema.json, truth.json and catalog.csv for a corpus spec.

    truth.json records the exact conditional distribution of every target
    column per product and per condition value, for oracle checks; catalog.csv
    lists each product's condition attributes.
    """
    if not isinstance(spec, CorpusSpec):
        spec = load_corpus_spec(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = sample_corpus(spec, seed)

    data_path = out / "data.csv"
    schema_path = out / "schema.json"
    truth_path = out / "truth.json"
    catalog_path = out / "catalog.csv"

    write_csv(data, data_path)
    save_schema(spec.schema(), schema_path)

    truth_doc = {
        "seed": seed,
        "rows_per_product": spec.rows_per_product,
        "products": {
            p.product_id: {
                rule.name: _truth_json(spec.truth_for(p, rule)) for rule in spec.target_rules
            }
            for p in spec.products
        },
        "by_condition": {
            rule.name: {
                key: _truth_json(dist) for key, dist in sorted(rule.distributions.items())
            }
            for rule in spec.target_rules
        },
    }
    truth_path.write_text(json.dumps(truth_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    condition_names = [c.name for c in spec.condition_columns]
    with open(catalog_path, "w", newline="", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow([spec.group_key] + condition_names)
        for p in spec.products:
            writer.writerow([p.product_id] + [str(p.attributes[c]) for c in condition_names])

    return CorpusFiles(data=data_path, schema=schema_path, truth=truth_path, catalog=catalog_path)


# ---------------------------------------------------------------------------
# Scoring generated samples against the closed-form truth
# ---------------------------------------------------------------------------


def truth_tv_complement(frequencies: Mapping[str, float], truth: DiscreteTruth) -> float:
    """TV complement between observed frequencies and exact probabilities."""
    cats = set(frequencies) | set(truth.categories)
    p = {c: 0.0 for c in cats}
    p.update({c: float(q) for c, q in zip(truth.categories, truth.probabilities)})
    gap = sum(abs(frequencies.get(c, 0.0) - p[c]) for c in cats)
    return 1.0 - 0.5 * gap


def truth_ks_complement(values: Sequence[float], truth: MixtureTruth) -> float:
    """KS complement between an empirical sample and the exact mixture CDF.

    One-sample statistic: sup over sample points of the gap between the ECDF
    (checked from both sides of each step) and the continuous truth CDF.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64))
    n = arr.size
    if n == 0:
        raise ValueError("cannot score an empty sample")
    cdf = np.array([truth.cdf(x) for x in arr])
    steps = np.arange(1, n + 1) / n
    d_plus = float(np.max(steps - cdf))
    d_minus = float(np.max(cdf - (steps - 1.0 / n)))
    return 1.0 - max(d_plus, d_minus)


# ---------------------------------------------------------------------------
# Built-in corpus specs
# ---------------------------------------------------------------------------


def flip_oracle_spec(
    products: int = 30, rows_per_product: int = 200, with_brand: bool = False
) -> CorpusSpec:
    """A corpus whose single condition flips the targets' distributions.

    Condition g in {0, 1} flips a binary target's majority from 0.8/0.2 to
    0.2/0.8 and shifts the mode weights of a bimodal continuous target from
    0.75/0.25 to 0.25/0.75. Products alternate between the two condition
    values, so a product-level holdout keeps both values in training.
    """
    doc = {
        "group_key": "product",
        "rows_per_product": rows_per_product,
        "condition_columns": [{"name": "g", "kind": "discrete"}]
        + ([{"name": "brand", "kind": "discrete"}] if with_brand else []),
        "target_columns": [
            {
                "name": "family_buyer",
                "kind": "discrete",
                "depends_on": "g",
                "distributions": {
                    "0": {"yes": 0.8, "no": 0.2},
                    "1": {"yes": 0.2, "no": 0.8},
                },
            },
            {
                "name": "spend",
                "kind": "continuous",
                "depends_on": "g",
                "distributions": {
                    "0": {"weights": [0.75, 0.25], "means": [0.0, 10.0], "stds": [1.0, 1.0]},
                    "1": {"weights": [0.25, 0.75], "means": [0.0, 10.0], "stds": [1.0, 1.0]},
                },
            },
        ],
        "products": [
            {
                "id": f"P{i:02d}",
                "attributes": {"g": str(i % 2)}
                | ({"brand": "ABC"[i % 3]} if with_brand else {}),
            }
            for i in range(products)
        ],
    }
    return load_corpus_spec(doc)


def desk_corpus_spec(products: int = 30, rows_per_product: int = 250) -> CorpusSpec:
    """A richer desk-scale corpus for the holdout protocol and preset sweep.

    Mixed target kinds (two discrete, two continuous) driven by two discrete
    condition columns, plus a continuous condition column (container volume)
    that varies across products. Every condition category appears in many
    products, so random product holdouts keep all categories training-seen.
    """
    containers = ["bottle", "can", "pouch"]
    flavors = ["plain", "citrus"]
    volumes = [250.0, 500.0, 1000.0, 2000.0]
    doc = {
        "group_key": "product",
        "rows_per_product": rows_per_product,
        "condition_columns": [
            {"name": "container", "kind": "discrete"},
            {"name": "flavor", "kind": "discrete"},
            {"name": "volume", "kind": "continuous"},
        ],
        "target_columns": [
            {
                "name": "household",
                "kind": "discrete",
                "depends_on": "container",
                "distributions": {
                    "bottle": {"single": 0.65, "family": 0.35},
                    "can": {"single": 0.45, "family": 0.55},
                    "pouch": {"single": 0.2, "family": 0.8},
                },
            },
            {
                "name": "season",
                "kind": "discrete",
                "depends_on": "flavor",
                "distributions": {
                    "plain": {"spring": 0.25, "summer": 0.25, "fall": 0.25, "winter": 0.25},
                    "citrus": {"spring": 0.15, "summer": 0.55, "fall": 0.2, "winter": 0.1},
                },
            },
            {
                "name": "age",
                "kind": "continuous",
                "depends_on": "container",
                "distributions": {
                    "bottle": {"weights": [0.7, 0.3], "means": [30.0, 60.0], "stds": [6.0, 7.0]},
                    "can": {"weights": [0.5, 0.5], "means": [30.0, 60.0], "stds": [6.0, 7.0]},
                    "pouch": {"weights": [0.25, 0.75], "means": [30.0, 60.0], "stds": [6.0, 7.0]},
                },
            },
            {
                "name": "quantity",
                "kind": "continuous",
                "depends_on": "flavor",
                "distributions": {
                    "plain": {"weights": [1.0], "means": [2.0], "stds": [0.8]},
                    "citrus": {"weights": [0.6, 0.4], "means": [1.0, 4.0], "stds": [0.5, 1.0]},
                },
            },
        ],
        "products": [
            {
                "id": f"P{i:02d}",
                "attributes": {
                    "container": containers[i % 3],
                    "flavor": flavors[i % 2],
                    "volume": volumes[i % 4],
                },
                # purchase counts vary across products so the weighted
                # aggregate genuinely differs from the unweighted one
                "rows": rows_per_product // 2 + (i * 53) % rows_per_product,
            }
            for i in range(products)
        ],
    }
    return load_corpus_spec(doc)
