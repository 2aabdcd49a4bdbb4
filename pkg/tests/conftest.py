from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=50
)
settings.load_profile("suite")

from ctvae.corpus import desk_corpus_spec, flip_oracle_spec, make_synthetic_corpus, sample_corpus
from ctvae.model import TrainConfig, train
from ctvae.schema import ColumnSpec, Dataset, Schema


@pytest.fixture(scope="session")
def toy_schema() -> Schema:
    return Schema(
        columns=(
            ColumnSpec("flag", "discrete", "target"),
            ColumnSpec("spend", "continuous", "target"),
            ColumnSpec("g", "discrete", "condition"),
        ),
        group_key="product",
    )


def make_toy_rows(n: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        g = "0" if i % 2 == 0 else "1"
        p_yes = 0.8 if g == "0" else 0.2
        flag = "yes" if rng.random() < p_yes else "no"
        w = 0.75 if g == "0" else 0.25
        spend = rng.normal(0.0, 1.0) if rng.random() < w else rng.normal(10.0, 1.0)
        rows.append(
            {"flag": flag, "spend": float(spend), "g": g, "product": f"P{i % 8:02d}"}
        )
    return rows


@pytest.fixture(scope="session")
def toy_dataset(toy_schema) -> Dataset:
    return Dataset(schema=toy_schema, rows=tuple(make_toy_rows(400)))


@pytest.fixture(scope="session")
def toy_model(toy_dataset):
    """A quickly trained small model; structure is right, quality is not the point."""
    cfg = TrainConfig(batch_size=100, max_epochs=15, patience=5, seed=3, arch=64)
    m, history = train(toy_dataset, cfg)
    return m, history


@pytest.fixture(scope="session")
def flip_corpus(tmp_path_factory):
    """The flip-oracle corpus: one condition g flips both target distributions."""
    spec = flip_oracle_spec(products=30, rows_per_product=200)
    out = tmp_path_factory.mktemp("flip_corpus")
    files = make_synthetic_corpus(spec, seed=101, out_dir=out)
    data = sample_corpus(spec, seed=101)
    return spec, data, files


@pytest.fixture(scope="session")
def flip_model(flip_corpus):
    """Preset-64 conditional model trained on the full flip corpus, with wall time."""
    _, data, _ = flip_corpus
    cfg = TrainConfig(batch_size=500, max_epochs=150, patience=10, seed=42, arch=64)
    start = time.monotonic()
    m, history = train(data, cfg)
    seconds = time.monotonic() - start
    return m, history, seconds


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Richer desk-scale corpus (mixed kinds, varied purchase counts)."""
    spec = desk_corpus_spec(products=30, rows_per_product=250)
    out = tmp_path_factory.mktemp("desk_corpus")
    files = make_synthetic_corpus(spec, seed=202, out_dir=out)
    return spec, files
