"""Deterministic seed derivation and counter-based per-row random streams.

Every stochastic stage derives its own seed from a base seed plus string
labels, so independent stages never share a stream and whole pipelines are
reproducible from a single seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK_63 = (1 << 63) - 1
_MASK_64 = (1 << 64) - 1


def derive_seed(base: int, *labels: object) -> int:
    """Derive a child seed from ``base`` and a label path.

    Stable across runs and platforms; distinct label paths give
    independent seeds.
    """
    key = "|".join([str(int(base))] + [str(lab) for lab in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK_63


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def row_stream(seed: int, index: int) -> np.random.Generator:
    """Independent stream for row ``index`` under ``seed``.

    Uses a keyed counter-based generator, so row ``i`` draws the same
    values regardless of how many rows are requested in total: a batch of
    10,000 rows is a strict prefix-extension of a batch of 100.
    """
    key = np.array([seed & _MASK_64, index & _MASK_64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
