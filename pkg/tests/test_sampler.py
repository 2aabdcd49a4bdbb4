from __future__ import annotations

import math

import numpy as np
import pytest

from ctvae.errors import EncodingError
from ctvae.sampler import (
    ColumnSummarySpec,
    ConditionSpec,
    DistributionSummary,
    Provenance,
    SyntheticBatch,
    build_condition,
    compare,
    encode_condition,
    generate,
    summarize,
)
from ctvae.schema import ColumnSpec, Schema
from ctvae.transform import (
    ContinuousTransform,
    DiscreteTransform,
    GaussianMixture,
    bundle_from_transforms,
)


def product_bundle():
    """Condition columns shaped like product attributes: volume, container,
    calories, plus 'other identity' columns that a base product pins."""
    schema = Schema(
        columns=(
            ColumnSpec("buyer", "discrete", "target"),
            ColumnSpec("volume", "continuous", "condition"),
            ColumnSpec("container", "discrete", "condition"),
            ColumnSpec("calories", "continuous", "condition"),
            ColumnSpec("brand_line", "discrete", "condition"),
            ColumnSpec("flavor", "discrete", "condition"),
        ),
        group_key="product",
    )

    def mixture(values):
        arr = np.array(values, dtype=np.float64)
        return GaussianMixture(
            weights=np.full(len(arr), 1.0 / len(arr)), means=arr, stds=np.full(len(arr), 1.0)
        )

    transforms = {
        "buyer": DiscreteTransform(column="buyer", vocabulary=("family", "self")),
        "volume": ContinuousTransform(
            column="volume", mixture=mixture([350.0, 500.0]), value_min=350.0, value_max=500.0
        ),
        "container": DiscreteTransform(
            column="container", vocabulary=("aluminum can", "plastic bottle")
        ),
        "calories": ContinuousTransform(
            column="calories", mixture=mixture([0.0, 33.0]), value_min=0.0, value_max=33.0
        ),
        "brand_line": DiscreteTransform(column="brand_line", vocabulary=("A1", "A2")),
        "flavor": DiscreteTransform(
            column="flavor", vocabulary=("apple cider vinegar", "none")
        ),
    }
    return bundle_from_transforms(schema, transforms)


PRODUCT_A2 = {
    "volume": 350.0,
    "container": "aluminum can",
    "calories": 33.0,
    "brand_line": "A2",
    "flavor": "none",
}


class TestBuildCondition:
    def test_line_extension_override(self):
        bundle = product_bundle()
        overrides = {"volume": 500.0, "container": "plastic bottle", "calories": 0.0}
        spec, x_c = build_condition(PRODUCT_A2, overrides, bundle)
        merged = spec.merged
        # overridden attributes replaced, the rest stay the base product's
        assert merged["volume"] == 500.0
        assert merged["container"] == "plastic bottle"
        assert merged["calories"] == 0.0
        assert merged["brand_line"] == "A2"
        assert merged["flavor"] == "none"
        # only the overridden columns' blocks differ from the base encoding
        base_x = encode_condition(ConditionSpec(base=spec.base, overrides={}), bundle)
        for name, offset, width in bundle.condition_layout:
            same = np.array_equal(x_c[offset : offset + width], base_x[offset : offset + width])
            assert same == (name not in overrides)

    def test_empty_override_is_identity(self):
        bundle = product_bundle()
        spec, x_c = build_condition(PRODUCT_A2, {}, bundle)
        base_x = encode_condition(ConditionSpec(base=spec.base, overrides={}), bundle)
        assert np.array_equal(x_c, base_x)

    def test_flavor_override_on_zero_calorie_base(self):
        bundle = product_bundle()
        base = dict(PRODUCT_A2, calories=0.0)
        spec, _ = build_condition(base, {"flavor": "apple cider vinegar"}, bundle)
        assert spec.merged["flavor"] == "apple cider vinegar"
        assert spec.merged["calories"] == 0.0

    def test_override_of_non_condition_column(self):
        bundle = product_bundle()
        with pytest.raises(ValueError, match="buyer"):
            build_condition(PRODUCT_A2, {"buyer": "self"}, bundle)

    def test_unseen_category_is_encoding_error(self):
        bundle = product_bundle()
        with pytest.raises(EncodingError, match="glass"):
            build_condition(PRODUCT_A2, {"container": "glass"}, bundle)

    def test_missing_base_column(self):
        bundle = product_bundle()
        base = dict(PRODUCT_A2)
        del base["flavor"]
        with pytest.raises(ValueError, match="flavor"):
            build_condition(base, {}, bundle)


class TestGenerate:
    def test_empty_batch(self, toy_model):
        m, _ = toy_model
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={}), 0, seed=1)
        assert batch.rows == ()
        assert batch.provenance.n == 0

    def test_deterministic(self, toy_model):
        m, _ = toy_model
        c = ConditionSpec(base={"g": "1"}, overrides={})
        assert generate(m, c, 50, seed=9).rows == generate(m, c, 50, seed=9).rows

    def test_prefix_extension(self, toy_model):
        m, _ = toy_model
        c = ConditionSpec(base={"g": "0"}, overrides={})
        small = generate(m, c, 10, seed=4)
        large = generate(m, c, 200, seed=4)
        assert large.rows[:10] == small.rows

    def test_schema_conformance(self, toy_model):
        m, _ = toy_model
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={}), 300, seed=2)
        vocab = m.bundle.transforms["flag"].vocabulary
        for row in batch.rows:
            assert row["flag"] in vocab
            assert math.isfinite(row["spend"])

    def test_provenance_carries_model_and_seed(self, toy_model):
        from ctvae.model import model_fingerprint

        m, _ = toy_model
        c = ConditionSpec(base={"g": "0"}, overrides={})
        batch = generate(m, c, 3, seed=11)
        assert batch.provenance.model_id == model_fingerprint(m)
        assert batch.provenance.seed == 11
        assert batch.provenance.condition == c

    def test_flip_recovery_against_ground_truth(self, flip_corpus, flip_model):
        spec, _, _ = flip_corpus
        m, _, _ = flip_model
        rule = spec.target_rules[0]  # binary target: 0.8/0.2 under g=0, flipped under g=1
        for g in ("0", "1"):
            condition, _ = build_condition({"g": g}, {}, m.bundle)
            batch = generate(m, condition, 10_000, seed=17)
            freq = summarize(batch, rule.name).as_mapping()
            truth = dict(
                zip(rule.distributions[g].categories, rule.distributions[g].probabilities)
            )
            for cat, p in truth.items():
                assert abs(freq[cat] - p) <= 0.07, (g, cat, freq[cat], p)

    def test_condition_flips_argmax(self, flip_corpus, flip_model):
        spec, _, _ = flip_corpus
        m, _, _ = flip_model
        rule = spec.target_rules[0]
        tops = {}
        for g in ("0", "1"):
            condition, _ = build_condition({"g": g}, {}, m.bundle)
            summary = summarize(generate(m, condition, 4000, seed=23), rule.name)
            tops[g] = summary.labels[int(np.argmax(summary.frequencies))]
        assert tops["0"] != tops["1"]


def make_batch(rows, columns):
    return SyntheticBatch(
        rows=tuple(rows),
        provenance=Provenance(model_id="t", condition=ConditionSpec({}, {}), seed=0, n=len(rows)),
        columns=tuple(columns),
    )


class TestSummarize:
    def test_children_flag_counting(self):
        batch = make_batch(
            [{"children": "with"}] * 3 + [{"children": "without"}],
            [ColumnSummarySpec(name="children", kind="discrete", vocabulary=("with", "without"))],
        )
        summary = summarize(batch, "children")
        assert summary.as_mapping() == {"with": 0.75, "without": 0.25}

    def test_two_equal_width_bins(self):
        batch = make_batch(
            [{"x": v} for v in (0.0, 1.0, 2.0, 3.0)],
            [ColumnSummarySpec(name="x", kind="continuous")],
        )
        summary = summarize(batch, "x", bins=2)
        assert np.array_equal(summary.bin_edges, np.array([0.0, 1.5, 3.0]))
        assert np.array_equal(summary.frequencies, np.array([0.5, 0.5]))

    def test_frequencies_sum_to_one(self, toy_model):
        m, _ = toy_model
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={}), 500, seed=8)
        for col in ("flag", "spend"):
            assert abs(summarize(batch, col).frequencies.sum() - 1.0) < 1e-9

    def test_permutation_invariance(self, toy_model):
        m, _ = toy_model
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={}), 100, seed=8)
        reversed_batch = make_batch(list(reversed(batch.rows)), batch.columns)
        for col in ("flag", "spend"):
            a = summarize(batch, col)
            b = summarize(reversed_batch, col)
            assert np.array_equal(a.frequencies, b.frequencies)

    def test_unknown_column(self, toy_model):
        m, _ = toy_model
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={}), 5, seed=8)
        with pytest.raises(ValueError):
            summarize(batch, "nope")

    def test_vocabulary_categories_with_zero_counts_included(self):
        batch = make_batch(
            [{"c": "a"}] * 4,
            [ColumnSummarySpec(name="c", kind="discrete", vocabulary=("a", "b"))],
        )
        assert summarize(batch, "c").as_mapping() == {"a": 1.0, "b": 0.0}


def summary(column, mapping):
    labels = tuple(mapping)
    return DistributionSummary(
        column=column,
        kind="discrete",
        labels=labels,
        frequencies=np.array([mapping[k] for k in labels], dtype=np.float64),
    )


class TestCompare:
    def test_identical_summaries(self):
        a = summary("c", {"x": 0.4, "y": 0.6})
        delta = compare(a, summary("c", {"x": 0.4, "y": 0.6}))
        assert np.array_equal(delta.deltas, np.zeros(2))

    def test_purchase_shift_shape(self):
        a = summary("buyer", {"self": 0.5, "family": 0.5})
        b = summary("buyer", {"self": 0.39, "family": 0.61})
        delta = compare(a, b)
        assert delta.as_mapping()["self"] == pytest.approx(-0.11)
        assert delta.as_mapping()["family"] == pytest.approx(0.11)
        assert abs(delta.deltas.sum()) < 1e-9

    def test_two_category_deltas_are_negatives(self):
        a = summary("c", {"x": 0.3, "y": 0.7})
        b = summary("c", {"x": 0.8, "y": 0.2})
        delta = compare(a, b)
        assert delta.deltas[0] == pytest.approx(-delta.deltas[1])

    def test_mismatched_categories(self):
        with pytest.raises(ValueError):
            compare(summary("c", {"x": 1.0}), summary("c", {"y": 1.0}))

    def test_mismatched_columns(self):
        with pytest.raises(ValueError):
            compare(summary("c", {"x": 1.0}), summary("d", {"x": 1.0}))
