"""Minimal differentiable numeric substrate.

A reverse-mode gradient engine over a fixed operation vocabulary (affine,
relu, tanh, exp, concatenation, slicing, reductions, softmax cross-entropy,
Gaussian negative log-density), plus an adaptive-moment optimizer. The model
graph is small and static, so every operation builds a `Tensor` node that
records its parents, a backward rule, and a recompute closure; the resulting
graph is the gradient tape. All math is 64-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError, TrainingError

Array = np.ndarray

LN_2PI = math.log(2.0 * math.pi)


class Tensor:
    """Node on the gradient tape: a value, its parents, and backward/replay rules."""

    __slots__ = ("value", "grad", "parents", "backward_rule", "recompute", "op")

    def __init__(
        self,
        value: Array | float,
        parents: tuple["Tensor", ...] = (),
        backward_rule: Callable[[Array], None] | None = None,
        recompute: Callable[[], Array] | None = None,
        op: str = "leaf",
    ) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.parents = parents
        self.backward_rule = backward_rule
        self.recompute = recompute
        self.op = op

    def accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad = self.grad + g

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(op={self.op}, shape={self.value.shape})"


def as_tensor(x: Tensor | Array | float) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(
    value: Array,
    parents: tuple[Tensor, ...],
    backward_rule: Callable[[Array], None],
    recompute: Callable[[], Array],
    op: str,
) -> Tensor:
    return Tensor(value, parents=parents, backward_rule=backward_rule, recompute=recompute, op=op)


# ---------------------------------------------------------------------------
# Operation vocabulary
# ---------------------------------------------------------------------------


def add(a: Tensor | Array, b: Tensor | Array) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value + b.value

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(g, b.value.shape))

    return _node(out, (a, b), backward, lambda: a.value + b.value, "add")


def sub(a: Tensor | Array, b: Tensor | Array) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value - b.value

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(-g, b.value.shape))

    return _node(out, (a, b), backward, lambda: a.value - b.value, "sub")


def mul(a: Tensor | Array, b: Tensor | Array) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value * b.value

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        b.accumulate(_unbroadcast(g * a.value, b.value.shape))

    return _node(out, (a, b), backward, lambda: a.value * b.value, "mul")


def scale(a: Tensor | Array, c: float) -> Tensor:
    a = as_tensor(a)
    out = a.value * c

    def backward(g: Array) -> None:
        a.accumulate(g * c)

    return _node(out, (a,), backward, lambda: a.value * c, "scale")


def square(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    out = a.value * a.value

    def backward(g: Array) -> None:
        a.accumulate(g * 2.0 * a.value)

    return _node(out, (a,), backward, lambda: a.value * a.value, "square")


def exp(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)

    def backward(g: Array) -> None:
        a.accumulate(g * out)

    return _node(out, (a,), backward, lambda: np.exp(a.value), "exp")


def relu(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.value, 0.0)

    def backward(g: Array) -> None:
        a.accumulate(g * (a.value > 0.0))

    return _node(out, (a,), backward, lambda: np.maximum(a.value, 0.0), "relu")


def tanh(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)

    def backward(g: Array) -> None:
        a.accumulate(g * (1.0 - out * out))

    return _node(out, (a,), backward, lambda: np.tanh(a.value), "tanh")


def concat(a: Tensor | Array, b: Tensor | Array) -> Tensor:
    """Concatenate along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    out = np.concatenate([a.value, b.value], axis=-1)
    na = a.value.shape[-1]

    def backward(g: Array) -> None:
        a.accumulate(g[..., :na])
        b.accumulate(g[..., na:])

    return _node(
        out, (a, b), backward, lambda: np.concatenate([a.value, b.value], axis=-1), "concat"
    )


def slice_cols(a: Tensor | Array, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    out = a.value[..., start:stop]

    def backward(g: Array) -> None:
        full = np.zeros_like(a.value)
        full[..., start:stop] = g
        a.accumulate(full)

    return _node(out, (a,), backward, lambda: a.value[..., start:stop], "slice")


def sum_all(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.value.sum())

    def backward(g: Array) -> None:
        a.accumulate(np.broadcast_to(g, a.value.shape).copy())

    return _node(out, (a,), backward, lambda: np.asarray(a.value.sum()), "sum")


def sum_cols(a: Tensor | Array) -> Tensor:
    """Sum over the last axis."""
    a = as_tensor(a)
    out = a.value.sum(axis=-1)

    def backward(g: Array) -> None:
        a.accumulate(np.repeat(np.expand_dims(g, -1), a.value.shape[-1], axis=-1))

    return _node(out, (a,), backward, lambda: a.value.sum(axis=-1), "sum_cols")


def mean_all(a: Tensor | Array) -> Tensor:
    a = as_tensor(a)
    inv = 1.0 / a.value.size
    out = np.asarray(a.value.mean())

    def backward(g: Array) -> None:
        a.accumulate(np.broadcast_to(g * inv, a.value.shape).copy())

    return _node(out, (a,), backward, lambda: np.asarray(a.value.mean()), "mean")


def softmax_cross_entropy(logits: Tensor | Array, onehot: Array) -> Tensor:
    """Per-row cross-entropy between softmax(logits) and a one-hot target.

    Fused and log-sum-exp stable; logits may be (K,) or (B, K). The target is
    a constant, not a tape node.
    """
    logits = as_tensor(logits)
    target = np.asarray(onehot, dtype=np.float64)
    if target.shape != logits.value.shape:
        raise ContractError(
            f"cross-entropy target shape {target.shape} != logits shape {logits.value.shape}"
        )

    def forward() -> Array:
        x = logits.value
        m = x.max(axis=-1, keepdims=True)
        lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
        return (lse.squeeze(-1)) - (x * target).sum(axis=-1)

    out = forward()

    def backward(g: Array) -> None:
        x = logits.value
        m = x.max(axis=-1, keepdims=True)
        e = np.exp(x - m)
        softmax = e / e.sum(axis=-1, keepdims=True)
        logits.accumulate(np.expand_dims(g, -1) * (softmax - target))

    return _node(out, (logits,), backward, forward, "softmax_ce")


def gaussian_nll(mean: Tensor | Array, log_spread: Tensor | Array, target: Array) -> Tensor:
    """Per-element Gaussian negative log-density of a constant target.

    nll = 0.5 * ((target - mean) / s)^2 + log s + 0.5 * log(2 pi), with
    s = exp(log_spread); log_spread broadcasts against mean.
    """
    mean, log_spread = as_tensor(mean), as_tensor(log_spread)
    target = np.asarray(target, dtype=np.float64)

    def forward() -> Array:
        s = np.exp(log_spread.value)
        z = (target - mean.value) / s
        return 0.5 * z * z + log_spread.value + 0.5 * LN_2PI

    out = forward()

    def backward(g: Array) -> None:
        s = np.exp(log_spread.value)
        z = (target - mean.value) / s
        mean.accumulate(_unbroadcast(g * (-z / s), mean.value.shape))
        log_spread.accumulate(_unbroadcast(g * (1.0 - z * z), log_spread.value.shape))

    return _node(out, (mean, log_spread), backward, forward, "gaussian_nll")


@dataclass(frozen=True)
class AffineParams:
    """Weight matrix (out x in) and bias vector (out)."""

    weight: Array
    bias: Array

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ContractError("affine weight must be a matrix and bias a vector")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ContractError(
                f"affine shapes disagree: weight {self.weight.shape}, bias {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ContractError("affine parameters must be finite")


def affine(weight: Tensor | Array, bias: Tensor | Array, x: Tensor | Array) -> Tensor:
    """weight @ x + bias for a vector x, or x @ weight.T + bias row-wise for a batch."""
    weight, bias, x = as_tensor(weight), as_tensor(bias), as_tensor(x)
    w = weight.value
    if x.value.shape[-1] != w.shape[1]:
        raise ContractError(
            f"affine input width {x.value.shape[-1]} != weight in-dim {w.shape[1]}"
        )

    def forward() -> Array:
        return x.value @ weight.value.T + bias.value

    out = forward()

    def backward(g: Array) -> None:
        if g.ndim == 1:
            weight.accumulate(np.outer(g, x.value))
            bias.accumulate(g)
            x.accumulate(g @ weight.value)
        else:
            weight.accumulate(g.T @ x.value)
            bias.accumulate(g.sum(axis=0))
            x.accumulate(g @ weight.value)

    return _node(out, (weight, bias, x), backward, forward, "affine")


def affine_forward(p: AffineParams, x: Array) -> Array:
    """Plain (non-tape) affine evaluation."""
    return affine(p.weight, p.bias, np.asarray(x, dtype=np.float64)).value


# ---------------------------------------------------------------------------
# Backward pass and tape replay
# ---------------------------------------------------------------------------


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from a scalar loss."""
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_rule is not None and node.grad is not None:
            node.backward_rule(node.grad)


def gradients(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, Array]:
    """Run backward and collect the gradient of every named parameter."""
    backward(loss)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.value))
        for name, p in params.items()
    }


def replay_value(root: Tensor) -> Array:
    """Re-execute the recorded operations bottom-up; bit-identical to the forward value."""
    for node in _topological_order(root):
        if node.recompute is not None:
            node.value = np.asarray(node.recompute(), dtype=np.float64)
    return root.value


# ---------------------------------------------------------------------------
# Initialization and optimizer
# ---------------------------------------------------------------------------


def glorot_uniform(fan_out: int, fan_in: int, rng: np.random.Generator) -> Array:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass(frozen=True)
class OptimizerState:
    """Adaptive-moment accumulators; functional, never mutated in place."""

    step: int
    first_moment: dict[str, Array]
    second_moment: dict[str, Array]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_optimizer(
    params: Mapping[str, Array],
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerState:
    return OptimizerState(
        step=0,
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def optimizer_step(
    params: Mapping[str, Array],
    grads: Mapping[str, Array],
    state: OptimizerState,
) -> tuple[dict[str, Array], OptimizerState]:
    """One bias-corrected adaptive-moment update; returns new params and state."""
    step = state.step + 1
    new_params: dict[str, Array] = {}
    new_m: dict[str, Array] = {}
    new_v: dict[str, Array] = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ContractError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**step)
        v_hat = v / (1.0 - state.beta2**step)
        new_params[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v
    return new_params, replace(state, step=step, first_moment=new_m, second_moment=new_v)
