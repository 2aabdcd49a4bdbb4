"""Mode-specific normalization and one-hot encoding.

Continuous columns get a per-column Gaussian mixture; each value is encoded
as a within-mode offset alpha = (v - mu_k) / (4 sigma_k), clamped to [-1, 1],
plus a one-hot mode indicator. Discrete columns are one-hot encoded over the
vocabulary observed at fit time. Concatenating per-column encodings in schema
order yields the normalized vectors r_s (targets) and r_c (conditions) that
feed the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, EncodingError, ValidationError
from .schema import Dataset, Row, Schema

# Mixture-fitting knobs: EM with k-means++ style init, restarts, and a
# BIC-penalized choice of component count.
DEFAULT_MAX_MODES = 10
EM_RESTARTS = 5
EM_MAX_ITER = 300
EM_TOL = 1e-6
STD_FLOOR_SCALE = 1e-4

LN_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """1-D Gaussian mixture with components sorted by mean ascending."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.means) == len(self.stds)) or len(self.weights) < 1:
            raise ValidationError("mixture parameter arrays must share a positive length")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValidationError("mixture weights must sum to 1")
        if np.any(self.stds <= 0):
            raise ValidationError("mixture stds must be positive")
        if np.any(np.diff(self.means) < 0):
            raise ValidationError("mixture components must be sorted by mean")

    @property
    def component_count(self) -> int:
        return len(self.weights)

    def log_density(self, value: float) -> np.ndarray:
        """Per-component log pi_k + log N(value; mu_k, sigma_k^2)."""
        z = (value - self.means) / self.stds
        return np.log(self.weights) - np.log(self.stds) - 0.5 * (z * z + LN_2PI)

    def responsibilities(self, value: float) -> np.ndarray:
        log_p = self.log_density(value)
        log_p -= log_p.max()
        p = np.exp(log_p)
        return p / p.sum()

    def cdf(self, x: float) -> float:
        z = (x - self.means) / (self.stds * math.sqrt(2.0))
        comp = 0.5 * (1.0 + np.array([math.erf(v) for v in z]))
        return float(np.dot(self.weights, comp))


@dataclass(frozen=True)
class ContinuousTransform:
    """Fitted normalizer for one continuous column."""

    column: str
    mixture: GaussianMixture
    value_min: float
    value_max: float

    @property
    def encoded_width(self) -> int:
        return 1 + self.mixture.component_count


@dataclass(frozen=True)
class DiscreteTransform:
    """One-hot vocabulary for one discrete column."""

    column: str
    vocabulary: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValidationError(f"column {self.column!r}: duplicate vocabulary entries")
        if not self.vocabulary:
            raise ValidationError(f"column {self.column!r}: empty vocabulary")

    @property
    def encoded_width(self) -> int:
        return len(self.vocabulary)

    def index_of(self, value: str) -> int:
        try:
            return self.vocabulary.index(value)
        except ValueError:
            raise EncodingError(
                f"column {self.column!r}: unseen category {value!r}"
            ) from None


ColumnTransform = ContinuousTransform | DiscreteTransform


@dataclass(frozen=True)
class TransformBundle:
    """All fitted per-column transforms plus the r_s / r_c layouts.

    Layouts are (offset, width) per column name, contiguous and covering in
    schema order, so slicing the encoded vectors by layout recovers each
    column's block.
    """

    schema: Schema
    transforms: Mapping[str, ColumnTransform]
    target_layout: tuple[tuple[str, int, int], ...]
    condition_layout: tuple[tuple[str, int, int], ...]

    @property
    def target_dim(self) -> int:
        return sum(width for _, _, width in self.target_layout)

    @property
    def condition_dim(self) -> int:
        return sum(width for _, _, width in self.condition_layout)

    def transform_of(self, name: str) -> ColumnTransform:
        return self.transforms[name]

    def fitted_schema(self) -> Schema:
        """Schema with discrete vocabularies filled in from the fitted transforms."""
        columns = []
        for col in self.schema.columns:
            if col.kind == "discrete":
                t = self.transforms[col.name]
                assert isinstance(t, DiscreteTransform)
                columns.append(
                    type(col)(name=col.name, kind=col.kind, role=col.role, vocabulary=t.vocabulary)
                )
            else:
                columns.append(col)
        return Schema(columns=tuple(columns), group_key=self.schema.group_key)


# ---------------------------------------------------------------------------
# Gaussian mixture fitting (1-D EM with BIC model choice)
# ---------------------------------------------------------------------------


def _kmeanspp_means(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(k)
    centers[0] = values[rng.integers(len(values))]
    for j in range(1, k):
        d2 = np.min((values[:, None] - centers[None, :j]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers[j] = values[rng.integers(len(values))]
            continue
        centers[j] = values[np.searchsorted(np.cumsum(d2 / total), rng.random())]
    return centers


def _em_once(
    values: np.ndarray,
    k: int,
    std_floor: float,
    rng: np.random.Generator,
    trace: list[dict] | None = None,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """One EM run; returns (log_likelihood, weights, means, stds)."""
    n = len(values)
    means = _kmeanspp_means(values, k, rng)
    stds = np.full(k, max(float(values.std()), std_floor))
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    ll = prev_ll
    for _ in range(EM_MAX_ITER):
        # E step in log space
        z = (values[:, None] - means[None, :]) / stds[None, :]
        log_p = np.log(weights)[None, :] - np.log(stds)[None, :] - 0.5 * (z * z + LN_2PI)
        row_max = log_p.max(axis=1, keepdims=True)
        log_norm = row_max + np.log(np.exp(log_p - row_max).sum(axis=1, keepdims=True))
        resp = np.exp(log_p - log_norm)
        ll = float(log_norm.sum())

        # M step
        counts = resp.sum(axis=0) + 1e-300
        weights = counts / n
        weights = weights / weights.sum()
        means = (resp * values[:, None]).sum(axis=0) / counts
        var = (resp * (values[:, None] - means[None, :]) ** 2).sum(axis=0) / counts
        stds = np.sqrt(np.maximum(var, std_floor**2))

        if trace is not None:
            trace.append({"weights": weights.copy(), "log_likelihood": ll})
        if ll - prev_ll < EM_TOL:
            break
        prev_ll = ll
    return ll, weights, means, stds


def std_floor_for(values: np.ndarray) -> float:
    value_range = float(values.max() - values.min())
    return STD_FLOOR_SCALE * (value_range if value_range > 0 else 1.0)


def fit_gaussian_mixture(
    values: Sequence[float],
    max_modes: int = DEFAULT_MAX_MODES,
    seed: int = 0,
    trace: list[dict] | None = None,
) -> GaussianMixture:
    """Fit a 1-D Gaussian mixture, choosing the component count by BIC.

    Runs EM for every K in 1..max_modes (capped at the number of distinct
    values), keeps the best of a few restarts per K, and returns the K with
    the lowest BIC. A column of identical values yields a single component
    with the std floor. Deterministic given (values, max_modes, seed).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot fit a mixture to an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must all be finite")
    floor = std_floor_for(arr)
    distinct = len(np.unique(arr))
    if distinct == 1:
        return GaussianMixture(
            weights=np.array([1.0]), means=np.array([float(arr[0])]), stds=np.array([floor])
        )

    rng = np.random.default_rng(seed)
    n = arr.size
    best: tuple[float, np.ndarray, np.ndarray, np.ndarray] | None = None
    for k in range(1, min(max_modes, distinct) + 1):
        best_ll = -np.inf
        best_params: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        for _ in range(EM_RESTARTS):
            ll, w, m, s = _em_once(arr, k, floor, rng, trace=trace)
            if ll > best_ll:
                best_ll, best_params = ll, (w, m, s)
        assert best_params is not None
        n_params = 3 * k - 1  # weights (k-1) + means (k) + stds (k)
        bic = -2.0 * best_ll + n_params * math.log(n)
        if best is None or bic < best[0]:
            best = (bic, *best_params)

    assert best is not None
    _, weights, means, stds = best
    order = np.argsort(means, kind="stable")
    return GaussianMixture(weights=weights[order], means=means[order], stds=stds[order])


# ---------------------------------------------------------------------------
# Fitting and encoding
# ---------------------------------------------------------------------------


def fit_bundle(
    data: Dataset, max_modes: int = DEFAULT_MAX_MODES, seed: int = 0
) -> TransformBundle:
    """Fit per-column transforms on a dataset and lay out r_s / r_c."""
    transforms: dict[str, ColumnTransform] = {}
    for col in data.schema.columns:
        values = data.column_values(col.name)
        if col.kind == "continuous":
            arr = np.asarray(values, dtype=np.float64)
            mixture = fit_gaussian_mixture(arr, max_modes=max_modes, seed=seed)
            transforms[col.name] = ContinuousTransform(
                column=col.name,
                mixture=mixture,
                value_min=float(arr.min()),
                value_max=float(arr.max()),
            )
        else:
            vocab = tuple(sorted({str(v) for v in values}))
            transforms[col.name] = DiscreteTransform(column=col.name, vocabulary=vocab)
    return bundle_from_transforms(data.schema, transforms)


def bundle_from_transforms(
    schema: Schema, transforms: Mapping[str, ColumnTransform]
) -> TransformBundle:
    target_layout: list[tuple[str, int, int]] = []
    condition_layout: list[tuple[str, int, int]] = []
    offsets = {"target": 0, "condition": 0}
    for col in schema.columns:
        if col.name not in transforms:
            raise ContractError(f"no transform fitted for column {col.name!r}")
        width = transforms[col.name].encoded_width
        layout = target_layout if col.role == "target" else condition_layout
        layout.append((col.name, offsets[col.role], width))
        offsets[col.role] += width
    return TransformBundle(
        schema=schema,
        transforms=dict(transforms),
        target_layout=tuple(target_layout),
        condition_layout=tuple(condition_layout),
    )


def encode_continuous(
    value: float, t: ContinuousTransform, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Encode one continuous value as (alpha, one-hot mode indicator).

    With an rng the mode is sampled proportionally to the posterior
    responsibility (preserves within-mode diversity during training);
    without one the most responsible mode is taken, which is what condition
    compilation uses so a condition maps to a single vector.
    """
    if not math.isfinite(value):
        raise ValueError(f"column {t.column!r}: cannot encode non-finite value")
    mix = t.mixture
    resp = mix.responsibilities(value)
    if rng is None:
        k = int(np.argmax(resp))
    else:
        k = int(rng.choice(mix.component_count, p=resp))
    alpha = (value - mix.means[k]) / (4.0 * mix.stds[k])
    out = np.zeros(t.encoded_width)
    out[0] = min(1.0, max(-1.0, alpha))
    out[1 + k] = 1.0
    return out


def decode_continuous(code: np.ndarray, t: ContinuousTransform) -> float:
    """Invert mode-specific normalization: alpha * 4 sigma_k + mu_k.

    The mode selector (entries after alpha) may be a one-hot indicator or
    mode probabilities; the argmax component is used.
    """
    code = np.asarray(code, dtype=np.float64)
    if code.shape != (t.encoded_width,):
        raise ContractError(
            f"column {t.column!r}: expected code of width {t.encoded_width}, got {code.shape}"
        )
    alpha = float(code[0])
    if not math.isfinite(alpha):
        raise ValueError(f"column {t.column!r}: non-finite alpha")
    k = int(np.argmax(code[1:]))
    mix = t.mixture
    return alpha * 4.0 * float(mix.stds[k]) + float(mix.means[k])


def encode_discrete(value: str, t: DiscreteTransform) -> np.ndarray:
    out = np.zeros(t.encoded_width)
    out[t.index_of(str(value))] = 1.0
    return out


def encode_row(
    row: Row, bundle: TransformBundle, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Encode one row into (r_s, r_c) per the bundle layouts."""
    r_s = np.zeros(bundle.target_dim)
    r_c = np.zeros(bundle.condition_dim)
    for name, offset, width in bundle.target_layout:
        r_s[offset : offset + width] = _encode_value(row[name], bundle.transforms[name], rng)
    for name, offset, width in bundle.condition_layout:
        r_c[offset : offset + width] = _encode_value(row[name], bundle.transforms[name], rng)
    return r_s, r_c


def _encode_value(
    value: object, t: ColumnTransform, rng: np.random.Generator | None
) -> np.ndarray:
    if isinstance(t, ContinuousTransform):
        return encode_continuous(float(value), t, rng)  # type: ignore[arg-type]
    return encode_discrete(str(value), t)


def encode_dataset(
    data: Dataset, bundle: TransformBundle, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Encode every row; returns matrices of shape (N, dim r_s) and (N, dim r_c)."""
    rs = np.zeros((data.n, bundle.target_dim))
    rc = np.zeros((data.n, bundle.condition_dim))
    for i, row in enumerate(data.rows):
        rs[i], rc[i] = encode_row(row, bundle, rng)
    return rs, rc


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def decode_target(
    blocks: Mapping[str, np.ndarray],
    bundle: TransformBundle,
    policy: str = "stochastic",
    rng: np.random.Generator | None = None,
) -> Row:
    """Realize one synthetic row of target columns from decoder output blocks.

    Each block holds (alpha mean, mode logits) for a continuous column or
    category logits for a discrete one. Under the "stochastic" policy the
    categorical choices are sampled from the softmax of the logits; under
    "deterministic" the argmax is taken. Alphas are clamped to [-1, 1] before
    the inverse transform.
    """
    if policy not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown sampling policy {policy!r}")
    if policy == "stochastic" and rng is None:
        raise ValueError("stochastic decoding requires an rng")

    row: Row = {}
    for name, _, width in bundle.target_layout:
        if name not in blocks:
            raise ContractError(f"missing output block for column {name!r}")
        block = np.asarray(blocks[name], dtype=np.float64)
        if block.shape != (width,):
            raise ContractError(
                f"column {name!r}: expected block of width {width}, got {block.shape}"
            )
        t = bundle.transforms[name]
        if isinstance(t, ContinuousTransform):
            logits = block[1:]
            if policy == "stochastic":
                k = int(rng.choice(len(logits), p=_softmax(logits)))  # type: ignore[union-attr]
            else:
                k = int(np.argmax(logits))
            code = np.zeros(width)
            code[0] = min(1.0, max(-1.0, float(block[0])))
            code[1 + k] = 1.0
            row[name] = decode_continuous(code, t)
        else:
            if policy == "stochastic":
                idx = int(rng.choice(len(block), p=_softmax(block)))  # type: ignore[union-attr]
            else:
                idx = int(np.argmax(block))
            row[name] = t.vocabulary[idx]
    return row
