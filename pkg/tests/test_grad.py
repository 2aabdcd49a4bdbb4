from __future__ import annotations

import math

import numpy as np
import pytest

from ctvae import grad
from ctvae.errors import ContractError, TrainingError
from ctvae.grad import (
    AffineParams,
    Tensor,
    affine,
    affine_forward,
    backward,
    gradients,
    init_optimizer,
    optimizer_step,
    replay_value,
)


class TestAffine:
    def test_identity(self):
        p = AffineParams(weight=np.eye(3), bias=np.zeros(3))
        x = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(affine_forward(p, x), x)

    def test_hand_multiply(self):
        p = AffineParams(weight=np.array([[1.0, 2.0], [3.0, 4.0]]), bias=np.zeros(2))
        assert np.array_equal(affine_forward(p, np.array([1.0, 1.0])), np.array([3.0, 7.0]))

    def test_zero_weight_returns_bias(self):
        p = AffineParams(weight=np.zeros((2, 3)), bias=np.array([5.0, -1.0]))
        for x in (np.zeros(3), np.ones(3), np.array([9.0, -9.0, 0.5])):
            assert np.array_equal(affine_forward(p, x), p.bias)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            affine(np.zeros((2, 3)), np.zeros(2), np.zeros(4))

    def test_batched_matches_per_row(self):
        rng = np.random.default_rng(0)
        w, b = rng.normal(size=(4, 3)), rng.normal(size=4)
        xs = rng.normal(size=(5, 3))
        batched = affine(w, b, xs).value
        for i in range(5):
            assert np.allclose(batched[i], affine(w, b, xs[i]).value)


class TestRelu:
    def test_definition(self):
        assert np.array_equal(grad.relu(np.array([-1.0, 0.0, 2.0])).value, [0.0, 0.0, 2.0])

    def test_all_negative(self):
        assert np.array_equal(grad.relu(np.array([-3.0, -0.5])).value, [0.0, 0.0])

    def test_idempotent(self):
        x = np.array([-2.0, 0.0, 1.5, 7.0])
        once = grad.relu(x).value
        assert np.array_equal(grad.relu(once).value, once)


class TestBackward:
    def test_least_squares_gradient(self):
        rng = np.random.default_rng(1)
        w_val = rng.normal(size=(3, 4))
        x = rng.normal(size=4)
        y = rng.normal(size=3)
        w = Tensor(w_val)
        b = Tensor(np.zeros(3))
        residual = grad.sub(affine(w, b, x), y)
        loss = grad.scale(grad.sum_all(grad.square(residual)), 0.5)
        backward(loss)
        expected = np.outer(w_val @ x - y, x)
        assert np.max(np.abs(w.grad - expected)) < 1e-10

    def test_unused_parameter_gets_zero_gradient(self):
        used = Tensor(np.array([2.0]))
        unused = Tensor(np.array([5.0]))
        loss = grad.sum_all(grad.square(used))
        grads = gradients(loss, {"used": used, "unused": unused})
        assert np.array_equal(grads["unused"], np.zeros(1))
        assert np.array_equal(grads["used"], np.array([4.0]))

    def test_loss_must_be_scalar(self):
        with pytest.raises(ContractError):
            backward(Tensor(np.array([1.0, 2.0])))

    def _random_network_loss(self, rng, params):
        """Two-affine relu/tanh network with every op family on the tape."""
        x = rng.normal(size=(3, params["w1"].value.shape[1]))
        h = grad.relu(affine(params["w1"], params["b1"], x))
        h = grad.tanh(affine(params["w2"], params["b2"], h))
        left = grad.slice_cols(h, 0, 1)
        both = grad.concat(left, grad.exp(grad.scale(h, 0.1)))
        onehot = np.zeros((3, both.value.shape[1]))
        onehot[np.arange(3), rng.integers(both.value.shape[1], size=3)] = 1.0
        ce = grad.softmax_cross_entropy(both, onehot)
        nll = grad.gaussian_nll(left, params["ls"], rng.normal(size=(3, 1)))
        return grad.add(grad.mean_all(ce), grad.mean_all(grad.sum_cols(nll)))

    def make_params(self, rng, n_in, n_h, n_out):
        return {
            "w1": Tensor(rng.normal(size=(n_h, n_in)) * 0.6),
            "b1": Tensor(rng.normal(size=n_h) * 0.1),
            "w2": Tensor(rng.normal(size=(n_out, n_h)) * 0.6),
            "b2": Tensor(rng.normal(size=n_out) * 0.1),
            "ls": Tensor(np.array(-0.5)),
        }

    def test_finite_difference_oracle_ten_params(self):
        rng = np.random.default_rng(7)
        params = self.make_params(rng, 2, 2, 1)
        assert sum(p.value.size for p in params.values()) == 10
        self._check_against_fd(params, seed=7)

    def test_hundred_random_networks(self):
        for trial in range(100):
            rng = np.random.default_rng(1000 + trial)
            n_in = int(rng.integers(1, 5))
            n_h = int(rng.integers(1, 6))
            n_out = int(rng.integers(2, 5))
            params = self.make_params(rng, n_in, n_h, n_out)
            self._check_against_fd(params, seed=1000 + trial)

    def _check_against_fd(self, params, seed, h=1e-5):
        def loss_value():
            rng = np.random.default_rng(seed)
            return float(self._random_network_loss(rng, params).value)

        rng = np.random.default_rng(seed)
        loss = self._random_network_loss(rng, params)
        analytic = gradients(loss, params)
        for name, p in params.items():
            flat = p.value.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_value()
                flat[i] = orig - h
                down = loss_value()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                a = analytic[name].reshape(-1)[i]
                rel = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
                assert rel < 1e-4, f"{name}[{i}]: analytic {a} vs fd {fd}"


class TestTapeReplay:
    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(2)
        w = Tensor(rng.normal(size=(4, 3)))
        b = Tensor(rng.normal(size=4))
        x = rng.normal(size=(5, 3))
        out = grad.mean_all(grad.tanh(grad.relu(affine(w, b, x))))
        recorded = out.value.copy()
        assert np.array_equal(replay_value(out), recorded)

    def test_forward_determinism(self):
        rng = np.random.default_rng(3)
        w, b = rng.normal(size=(4, 4)), rng.normal(size=4)
        x = rng.normal(size=(2, 4))
        a = grad.relu(affine(w, b, x)).value
        b2 = grad.relu(affine(w, b, x)).value
        assert np.array_equal(a, b2)


def adaptive_moment_reference(w0: float, steps: int, lr: float) -> list[float]:
    """Independent scalar simulation of the bias-corrected update on f(w) = w^2."""
    m = v = 0.0
    w = w0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1.0 - 0.9**t)
        v_hat = v / (1.0 - 0.999**t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + 1e-8)
        out.append(w)
    return out


class TestOptimizer:
    def test_zero_gradient_leaves_params_unchanged(self):
        params = {"w": np.array([3.0, -1.0])}
        state = init_optimizer(params)
        new_params, new_state = optimizer_step(params, {"w": np.zeros(2)}, state)
        assert np.array_equal(new_params["w"], params["w"])
        assert new_state.step == 1
        assert np.array_equal(new_state.first_moment["w"], np.zeros(2))

    def test_zero_gradient_decays_accumulated_moments(self):
        params = {"w": np.array([1.0, 2.0])}
        state = init_optimizer(params)
        _, state = optimizer_step(params, {"w": np.ones(2)}, state)
        _, decayed = optimizer_step(params, {"w": np.zeros(2)}, state)
        assert np.all(np.abs(decayed.first_moment["w"]) < np.abs(state.first_moment["w"]))
        assert np.all(np.abs(decayed.second_moment["w"]) < np.abs(state.second_moment["w"]))

    def test_quadratic_descent_matches_scalar_simulation(self):
        reference = adaptive_moment_reference(1.0, 500, lr=0.05)
        params = {"w": np.array(1.0)}
        state = init_optimizer(params, learning_rate=0.05)
        trajectory = []
        for _ in range(500):
            grads = {"w": 2.0 * params["w"]}
            params, state = optimizer_step(params, grads, state)
            trajectory.append(float(params["w"]))
        assert np.allclose(trajectory, reference, atol=1e-12)
        # reaches |w| < 1e-3 quickly and monotonically up to the first crossing
        crossing = next(i for i, w in enumerate(reference) if abs(w) < 1e-3)
        assert crossing < 500
        prefix = [1.0] + [abs(w) for w in reference[: crossing + 1]]
        assert all(b < a for a, b in zip(prefix, prefix[1:]))
        assert abs(trajectory[-1]) < 1e-3

    def test_deterministic(self):
        params = {"w": np.array([1.0, -1.0])}
        grads = {"w": np.array([0.3, 0.7])}
        s1 = init_optimizer(params)
        s2 = init_optimizer(params)
        p1, s1 = optimizer_step(params, grads, s1)
        p2, s2 = optimizer_step(params, grads, s2)
        assert np.array_equal(p1["w"], p2["w"])
        assert np.array_equal(s1.first_moment["w"], s2.first_moment["w"])

    def test_inputs_not_mutated(self):
        params = {"w": np.array([1.0, 2.0])}
        grads = {"w": np.array([0.5, -0.5])}
        state = init_optimizer(params)
        params_copy = {k: v.copy() for k, v in params.items()}
        optimizer_step(params, grads, state)
        assert np.array_equal(params["w"], params_copy["w"])
        assert np.array_equal(state.first_moment["w"], np.zeros(2))
        assert state.step == 0

    def test_non_finite_gradient_names_parameter(self):
        params = {"spread.alpha": np.array(1.0)}
        state = init_optimizer(params)
        with pytest.raises(TrainingError, match="spread.alpha"):
            optimizer_step(params, {"spread.alpha": np.array(float("nan"))}, state)
