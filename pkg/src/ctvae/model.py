"""The conditional tabular VAE: encoder, decoder, loss, training, persistence.

The encoder maps the normalized row (r_s, optionally concatenated with r_c)
through two ReLU-affine layers to a Gaussian posterior N(mu, sigma^2 I); the
decoder maps (z, optionally r_c) back to per-column output blocks: a tanh
alpha mean plus mode logits for each continuous target column, and category
logits for each discrete one. Training minimizes reconstruction + KL-to-prior
by mini-batch adaptive-moment descent, keeping the parameter snapshot with
the best validation loss. With conditioning off the same machinery is an
unconditional tabular VAE baseline over the target columns alone.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import grad
from .errors import (
    ContractError,
    ModelCorruptionError,
    ModelVersionError,
    NumericError,
    TrainingError,
)
from .grad import Tensor
from .rng import derive_seed, make_rng
from .schema import Dataset, Schema, validation_split
from .transform import (
    ContinuousTransform,
    DiscreteTransform,
    TransformBundle,
    bundle_from_transforms,
    encode_dataset,
    fit_bundle,
)

MAGIC = b"CTVM"
FORMAT_VERSION = 1

INITIAL_LOG_SPREAD = math.log(0.1)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Hidden-layer widths: encoder h1/h2, latent size, decoder h1/h2."""

    enc_h1: int
    enc_h2: int
    latent_dim: int
    dec_h1: int
    dec_h2: int

    def __post_init__(self) -> None:
        for name in ("enc_h1", "enc_h2", "latent_dim", "dec_h1", "dec_h2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


PRESETS: dict[int, ArchitectureSpec] = {
    64: ArchitectureSpec(64, 32, 32, 32, 64),
    128: ArchitectureSpec(128, 64, 64, 64, 128),
    256: ArchitectureSpec(256, 128, 128, 128, 256),
    512: ArchitectureSpec(512, 256, 256, 256, 512),
}


def preset(width: int) -> ArchitectureSpec:
    if width not in PRESETS:
        raise ValueError(f"unknown preset {width}; choose one of {sorted(PRESETS)}")
    return PRESETS[width]


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    elbo_negated: float

    def __post_init__(self) -> None:
        if self.kl < -1e-9:
            raise NumericError(f"KL term is negative: {self.kl}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    max_epochs: int = 300
    patience: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    arch: int = 256
    validation_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ModelParams:
    """Fitted model: parameter arrays plus the owning transform bundle."""

    bundle: TransformBundle
    arch: ArchitectureSpec
    conditioning: bool
    params: dict[str, np.ndarray]
    param_order: tuple[str, ...]

    @property
    def encoder_input_dim(self) -> int:
        d = self.bundle.target_dim
        return d + self.bundle.condition_dim if self.conditioning else d

    @property
    def decoder_input_dim(self) -> int:
        d = self.arch.latent_dim
        return d + self.bundle.condition_dim if self.conditioning else d

    def tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(self.params[name]) for name in self.param_order}

    def with_params(self, params: Mapping[str, np.ndarray]) -> "ModelParams":
        return ModelParams(
            bundle=self.bundle,
            arch=self.arch,
            conditioning=self.conditioning,
            params=dict(params),
            param_order=self.param_order,
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class TrainHistory:
    epochs: tuple[EpochRecord, ...]
    best_epoch: int
    best_val_loss: float


def init_model(
    bundle: TransformBundle, arch: ArchitectureSpec, conditioning: bool, seed: int
) -> ModelParams:
    """Freshly initialized parameters: glorot-uniform weights, zero biases."""
    if bundle.target_dim == 0:
        raise ContractError("bundle has zero-width target encoding; nothing to model")
    rng = make_rng(seed)
    enc_in = bundle.target_dim + (bundle.condition_dim if conditioning else 0)
    dec_in = arch.latent_dim + (bundle.condition_dim if conditioning else 0)
    out_dim = bundle.target_dim

    params: dict[str, np.ndarray] = {}
    order: list[str] = []

    def add_affine(name: str, fan_out: int, fan_in: int) -> None:
        params[f"{name}.weight"] = grad.glorot_uniform(fan_out, fan_in, rng)
        params[f"{name}.bias"] = np.zeros(fan_out)
        order.extend([f"{name}.weight", f"{name}.bias"])

    add_affine("enc1", arch.enc_h1, enc_in)
    add_affine("enc2", arch.enc_h2, arch.enc_h1)
    add_affine("mu", arch.latent_dim, arch.enc_h2)
    add_affine("logvar", arch.latent_dim, arch.enc_h2)
    add_affine("dec1", arch.dec_h1, dec_in)
    add_affine("dec2", arch.dec_h2, arch.dec_h1)
    add_affine("out", out_dim, arch.dec_h2)

    for name, _, _ in bundle.target_layout:
        if isinstance(bundle.transforms[name], ContinuousTransform):
            # shape (1,): 0-d arrays degrade to immutable scalars under arithmetic
            params[f"spread.{name}"] = np.full(1, INITIAL_LOG_SPREAD)
            order.append(f"spread.{name}")

    return ModelParams(
        bundle=bundle,
        arch=arch,
        conditioning=conditioning,
        params=params,
        param_order=tuple(order),
    )


# ---------------------------------------------------------------------------
# Forward graphs
# ---------------------------------------------------------------------------


def _affine_layer(pt: Mapping[str, Tensor], name: str, x: Tensor) -> Tensor:
    return grad.affine(pt[f"{name}.weight"], pt[f"{name}.bias"], x)


def _encoder_graph(
    m: ModelParams, pt: Mapping[str, Tensor], r_s: np.ndarray, r_c: np.ndarray
) -> tuple[Tensor, Tensor]:
    x: Tensor = Tensor(np.concatenate([r_s, r_c], axis=-1)) if m.conditioning else Tensor(r_s)
    h1 = grad.relu(_affine_layer(pt, "enc1", x))
    h2 = grad.relu(_affine_layer(pt, "enc2", h1))
    return _affine_layer(pt, "mu", h2), _affine_layer(pt, "logvar", h2)


def _decoder_graph(
    m: ModelParams, pt: Mapping[str, Tensor], z: Tensor, r_c: np.ndarray
) -> Tensor:
    x = grad.concat(z, Tensor(r_c)) if m.conditioning else z
    h1 = grad.relu(_affine_layer(pt, "dec1", x))
    h2 = grad.relu(_affine_layer(pt, "dec2", h1))
    return _affine_layer(pt, "out", h2)


def encode(m: ModelParams, r_s: np.ndarray, r_c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior parameters (mu, sigma) for an encoded row or batch."""
    r_s = np.asarray(r_s, dtype=np.float64)
    r_c = np.asarray(r_c, dtype=np.float64)
    mu_t, logvar_t = _encoder_graph(m, m.tensors(), r_s, r_c)
    mu, sigma = mu_t.value, np.exp(0.5 * logvar_t.value)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NumericError("encoder produced non-finite activations")
    return mu, sigma


def reparameterize(mu: np.ndarray, sigma: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """z = mu + sigma * noise with standard-normal noise."""
    mu, sigma, noise = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, noise))
    if not (mu.shape == sigma.shape == noise.shape):
        raise ContractError("mu, sigma and noise must share a shape")
    return mu + sigma * noise


def decode(m: ModelParams, z: np.ndarray, r_c: np.ndarray) -> dict[str, np.ndarray]:
    """Per-target-column output blocks for a latent vector or batch.

    Continuous columns yield (tanh alpha mean, mode logits); discrete columns
    yield category logits. Blocks tile the bundle's target layout exactly.
    """
    z = np.asarray(z, dtype=np.float64)
    r_c = np.asarray(r_c, dtype=np.float64)
    if z.shape[-1] != m.arch.latent_dim:
        raise ContractError(f"latent width {z.shape[-1]} != {m.arch.latent_dim}")
    if m.conditioning and r_c.shape[-1] != m.bundle.condition_dim:
        raise ContractError(
            f"condition width {r_c.shape[-1]} != {m.bundle.condition_dim}"
        )
    out = _decoder_graph(m, m.tensors(), Tensor(z), r_c).value
    blocks: dict[str, np.ndarray] = {}
    for name, offset, width in m.bundle.target_layout:
        block = out[..., offset : offset + width].copy()
        if isinstance(m.bundle.transforms[name], ContinuousTransform):
            block[..., 0] = np.tanh(block[..., 0])
        blocks[name] = block
    return blocks


def _loss_graph(
    m: ModelParams,
    pt: Mapping[str, Tensor],
    r_s: np.ndarray,
    r_c: np.ndarray,
    noise: np.ndarray,
) -> tuple[Tensor, Tensor, Tensor]:
    """Build the negated-ELBO graph; returns (loss, reconstruction, kl) means."""
    mu_t, logvar_t = _encoder_graph(m, pt, r_s, r_c)
    sigma_t = grad.exp(grad.scale(logvar_t, 0.5))
    z = grad.add(mu_t, grad.mul(sigma_t, Tensor(noise)))
    out = _decoder_graph(m, pt, z, r_c)

    recon_terms: list[Tensor] = []
    for name, offset, width in m.bundle.target_layout:
        t = m.bundle.transforms[name]
        if isinstance(t, ContinuousTransform):
            alpha_target = r_s[..., offset : offset + 1]
            mode_target = r_s[..., offset + 1 : offset + width]
            alpha_mean = grad.tanh(grad.slice_cols(out, offset, offset + 1))
            nll = grad.gaussian_nll(alpha_mean, pt[f"spread.{name}"], alpha_target)
            recon_terms.append(grad.sum_cols(nll))
            recon_terms.append(
                grad.softmax_cross_entropy(
                    grad.slice_cols(out, offset + 1, offset + width), mode_target
                )
            )
        else:
            recon_terms.append(
                grad.softmax_cross_entropy(
                    grad.slice_cols(out, offset, offset + width),
                    r_s[..., offset : offset + width],
                )
            )
    recon_rows = recon_terms[0]
    for term in recon_terms[1:]:
        recon_rows = grad.add(recon_rows, term)

    # KL(N(mu, sigma^2 I) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
    inner = grad.sub(grad.sub(grad.add(grad.square(mu_t), grad.exp(logvar_t)), logvar_t), Tensor(1.0))
    kl_rows = grad.scale(grad.sum_cols(inner), 0.5)

    recon_mean = grad.mean_all(recon_rows)
    kl_mean = grad.mean_all(kl_rows)
    return grad.add(recon_mean, kl_mean), recon_mean, kl_mean


def elbo_loss(
    m: ModelParams, r_s: np.ndarray, r_c: np.ndarray, noise: np.ndarray
) -> LossBreakdown:
    """Negated ELBO for one encoded row or the mean over a batch."""
    r_s = np.asarray(r_s, dtype=np.float64)
    r_c = np.asarray(r_c, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    loss, recon, kl = _loss_graph(m, m.tensors(), r_s, r_c, noise)
    for label, t in (("loss", loss), ("reconstruction", recon), ("kl", kl)):
        if not np.all(np.isfinite(t.value)):
            raise NumericError(f"non-finite {label} term")
    return LossBreakdown(
        reconstruction=float(recon.value), kl=float(kl.value), elbo_negated=float(loss.value)
    )


def elbo_loss_tensors(
    m: ModelParams, pt: Mapping[str, Tensor], r_s: np.ndarray, r_c: np.ndarray, noise: np.ndarray
) -> tuple[Tensor, Tensor, Tensor]:
    """Tape-building variant of ``elbo_loss`` for training and gradient checks."""
    return _loss_graph(m, pt, r_s, r_c, noise)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def train(
    data: Dataset,
    cfg: TrainConfig,
    conditioning: bool = True,
    bundle: TransformBundle | None = None,
    max_modes: int = 10,
) -> tuple[ModelParams, TrainHistory]:
    """Fit the model on a training dataset.

    Fits the transform bundle on the given rows (unless one is passed in),
    holds out a validation fraction at row level, and runs mini-batch descent
    with per-epoch reshuffling. Returns the parameter snapshot from the epoch
    with the best validation loss, stopping early once `patience` epochs pass
    without improvement.
    """
    if data.n == 0:
        raise TrainingError("training data is empty")
    if bundle is None:
        bundle = fit_bundle(data, max_modes=max_modes, seed=derive_seed(cfg.seed, "bundle"))

    n_val = int(math.floor(cfg.validation_fraction * data.n + 0.5))
    if data.n >= 2 and n_val >= 1:
        fit_data, val_data = validation_split(
            data, cfg.validation_fraction, derive_seed(cfg.seed, "valsplit")
        )
    else:
        fit_data, val_data = data, None

    enc_rng = make_rng(derive_seed(cfg.seed, "encode"))
    rs_fit, rc_fit = encode_dataset(fit_data, bundle, enc_rng)
    if val_data is not None:
        rs_val, rc_val = encode_dataset(val_data, bundle, enc_rng)

    arch = preset(cfg.arch)
    m = init_model(bundle, arch, conditioning, derive_seed(cfg.seed, "init"))
    params = dict(m.params)
    state = grad.init_optimizer(params, learning_rate=cfg.learning_rate)

    if val_data is not None:
        noise_val = make_rng(derive_seed(cfg.seed, "valnoise")).standard_normal(
            (val_data.n, arch.latent_dim)
        )

    best_val = math.inf
    best_epoch = 0
    best_params = dict(params)
    stale = 0
    records: list[EpochRecord] = []

    n_fit = fit_data.n
    for epoch in range(1, cfg.max_epochs + 1):
        epoch_rng = make_rng(derive_seed(cfg.seed, "epoch", epoch))
        perm = epoch_rng.permutation(n_fit)
        total = 0.0
        for start in range(0, n_fit, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            noise = epoch_rng.standard_normal((len(idx), arch.latent_dim))
            pt = {name: Tensor(params[name]) for name in m.param_order}
            loss, _, _ = _loss_graph(m, pt, rs_fit[idx], rc_fit[idx], noise)
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            grads = grad.gradients(loss, pt)
            params, state = grad.optimizer_step(params, grads, state)
            total += float(loss.value) * len(idx)
        train_loss = total / n_fit

        if val_data is not None:
            pt = {name: Tensor(params[name]) for name in m.param_order}
            val_t, _, _ = _loss_graph(m, pt, rs_val, rc_val, noise_val)
            val_loss = float(val_t.value)
        else:
            val_loss = train_loss
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        records.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss))

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = dict(params)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    history = TrainHistory(epochs=tuple(records), best_epoch=best_epoch, best_val_loss=best_val)
    return m.with_params(best_params), history


# ---------------------------------------------------------------------------
# Persistence (versioned, checksummed container; bit-exact round trip)
# ---------------------------------------------------------------------------


def _bundle_header_and_arrays(
    bundle: TransformBundle,
) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    columns = []
    arrays: list[tuple[str, np.ndarray]] = []
    for col in bundle.schema.columns:
        t = bundle.transforms[col.name]
        if isinstance(t, ContinuousTransform):
            columns.append(
                {
                    "name": col.name,
                    "kind": "continuous",
                    "value_min": t.value_min,
                    "value_max": t.value_max,
                }
            )
            arrays.append((f"mixture.{col.name}.weights", t.mixture.weights))
            arrays.append((f"mixture.{col.name}.means", t.mixture.means))
            arrays.append((f"mixture.{col.name}.stds", t.mixture.stds))
        else:
            columns.append({"name": col.name, "kind": "discrete", "vocabulary": list(t.vocabulary)})
    header = {
        "schema": {
            "group_key": bundle.schema.group_key,
            "columns": [
                {"name": c.name, "kind": c.kind, "role": c.role} for c in bundle.schema.columns
            ],
        },
        "bundle_columns": columns,
    }
    return header, arrays


def _serialize(m: ModelParams) -> bytes:
    bundle_header, arrays = _bundle_header_and_arrays(m.bundle)
    for name in m.param_order:
        arrays.append((name, m.params[name]))
    header = {
        **bundle_header,
        "arch": {
            "enc_h1": m.arch.enc_h1,
            "enc_h2": m.arch.enc_h2,
            "latent_dim": m.arch.latent_dim,
            "dec_h1": m.arch.dec_h1,
            "dec_h2": m.arch.dec_h2,
        },
        "conditioning": m.conditioning,
        "param_order": list(m.param_order),
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    return struct.pack("<Q", len(header_bytes)) + header_bytes + blob


def save_model(m: ModelParams, path: str | Path) -> None:
    payload = _serialize(m)
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(digest)
        fh.write(payload)


def model_fingerprint(m: ModelParams) -> str:
    """Stable hex id of a model's full serialized state."""
    return hashlib.sha256(_serialize(m)).hexdigest()


def load_model(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 40 or raw[:4] != MAGIC:
        raise ModelCorruptionError(f"{path}: not a model file (bad magic bytes)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: file format version {version}, this build supports version {FORMAT_VERSION}"
        )
    digest, payload = raw[8:40], raw[40:]
    if hashlib.sha256(payload).digest() != digest:
        raise ModelCorruptionError(f"{path}: checksum mismatch; file is corrupt")

    (header_len,) = struct.unpack("<Q", payload[:8])
    header = json.loads(payload[8 : 8 + header_len].decode("utf-8"))
    blob = payload[8 + header_len :]

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).copy()
        arrays[entry["name"]] = arr.reshape(shape)
        offset += size * 8

    from .schema import ColumnSpec  # local import to avoid cycle at module load

    schema = Schema(
        columns=tuple(
            ColumnSpec(name=c["name"], kind=c["kind"], role=c["role"])
            for c in header["schema"]["columns"]
        ),
        group_key=header["schema"]["group_key"],
    )
    transforms: dict[str, object] = {}
    for col in header["bundle_columns"]:
        name = col["name"]
        if col["kind"] == "continuous":
            from .transform import GaussianMixture

            transforms[name] = ContinuousTransform(
                column=name,
                mixture=GaussianMixture(
                    weights=arrays[f"mixture.{name}.weights"],
                    means=arrays[f"mixture.{name}.means"],
                    stds=arrays[f"mixture.{name}.stds"],
                ),
                value_min=col["value_min"],
                value_max=col["value_max"],
            )
        else:
            transforms[name] = DiscreteTransform(column=name, vocabulary=tuple(col["vocabulary"]))
    bundle = bundle_from_transforms(schema, transforms)  # type: ignore[arg-type]

    arch = ArchitectureSpec(**header["arch"])
    param_order = tuple(header["param_order"])
    params = {name: arrays[name] for name in param_order}
    return ModelParams(
        bundle=bundle,
        arch=arch,
        conditioning=header["conditioning"],
        params=params,
        param_order=param_order,
    )
