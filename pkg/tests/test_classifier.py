import math

import numpy as np
import pytest

from oracles import fd_gradient, max_rel_err
from topicmask.classifier import (
    AdamWState,
    MlpParams,
    adamw_step,
    backward,
    batch_backward,
    ce_smoothed,
    cross_entropy,
    forward,
    load_checkpoint,
    save_checkpoint,
    smoothed_target,
)


def random_params(rng, d=5, h=4, n_classes=3, scale=0.5):
    return MlpParams.init(rng, d, h, n_classes, scale=scale)


class TestForward:
    def test_zero_weights_uniform(self):
        p = MlpParams(np.zeros((4, 3)), np.zeros(3), np.zeros((3, 5)), np.zeros(5))
        out = forward(p, np.ones(4))
        assert np.allclose(out, 0.2)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(0)
        p = random_params(rng)
        x = rng.normal(size=5)
        base = forward(p, x)
        shifted = MlpParams(p.W1, p.b1, p.W2, p.b2 + 3.7)
        assert np.allclose(forward(shifted, x), base, atol=1e-12)

    def test_normalized_and_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = random_params(rng, scale=2.0)
            x = rng.normal(size=5)
            out = forward(p, x)
            assert abs(out.sum() - 1) < 1e-9
            assert np.all(out > 0)


class TestCeSmoothed:
    def test_perfect_prediction_limit(self):
        p = np.array([1 - 2e-12, 1e-12, 1e-12])
        assert ce_smoothed(p, 0, 0.0) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_prediction_log_c(self):
        p = np.full(4, 0.25)
        for y in range(4):
            assert ce_smoothed(p, y, 0.15) == pytest.approx(math.log(4), abs=1e-12)

    def test_lower_bound_is_target_entropy(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            q = smoothed_target(int(rng.integers(4)), 4, 0.15)
            p = rng.dirichlet(np.ones(4))
            entropy = -(q * np.log(q)).sum()
            assert cross_entropy(p, q) >= entropy - 1e-12
        # equality at p = q
        q = smoothed_target(1, 4, 0.15)
        assert cross_entropy(q, q) == pytest.approx(-(q * np.log(q)).sum(), abs=1e-12)

    def test_smoothing_validated(self):
        with pytest.raises(ValueError):
            smoothed_target(0, 3, 1.0)


class TestBackward:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            p = random_params(rng)
            x = rng.normal(size=5)
            q = rng.dirichlet(np.ones(3))
            grads, dx = backward(p, x, q)
            arrays = {**p.to_dict(), "x": x}

            def loss():
                return cross_entropy(forward(p, x), q)

            fd = fd_gradient(loss, arrays)
            assert max_rel_err(grads, {k: fd[k] for k in grads}) < 1e-4
            assert max_rel_err({"x": dx}, {"x": fd["x"]}) < 1e-4

    def test_zero_gradient_at_minimum(self):
        # with q equal to the model output, gradients vanish
        rng = np.random.default_rng(4)
        p = random_params(rng)
        x = rng.normal(size=5)
        q = forward(p, x)
        grads, _ = backward(p, x, q)
        for g in grads.values():
            assert np.abs(g).max() < 1e-12

    def test_linearity_in_loss(self):
        rng = np.random.default_rng(5)
        p = random_params(rng)
        x = rng.normal(size=5)
        q = rng.dirichlet(np.ones(3))
        single, _ = backward(p, x, q)
        xs = np.stack([x, x])
        qs = np.stack([q, q])
        # sum (not mean) over two identical examples doubles every gradient
        _, double, _ = batch_backward(p, xs, qs, weights=np.ones(2))
        for k in single:
            assert np.allclose(double[k], 2 * single[k], atol=1e-12)


class TestAdamW:
    def make(self, rng):
        p = random_params(rng)
        return p, p.to_dict()

    def test_zero_grad_no_decay_is_fixed_point(self):
        rng = np.random.default_rng(6)
        p, params = self.make(rng)
        before = {k: v.copy() for k, v in params.items()}
        state = AdamWState.init(params, weight_decay=0.0)
        adamw_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state, lr=0.1)
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_zero_grad_with_decay_scales(self):
        rng = np.random.default_rng(7)
        p, params = self.make(rng)
        before = {k: v.copy() for k, v in params.items()}
        state = AdamWState.init(params, weight_decay=0.05)
        adamw_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state, lr=0.1)
        for k in params:
            assert np.allclose(params[k], before[k] * (1 - 0.1 * 0.05), atol=1e-15)

    def test_lr_zero_is_identity(self):
        rng = np.random.default_rng(8)
        p, params = self.make(rng)
        before = {k: v.copy() for k, v in params.items()}
        state = AdamWState.init(params)
        grads = {k: np.ones_like(v) for k, v in params.items()}
        adamw_step(params, grads, state, lr=0.0)
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_constant_gradient_asymptotic_signed_step(self):
        # after bias correction settles, a constant gradient g drives the
        # update toward -lr * sign(g)
        w = np.array([0.0])
        params = {"w": w}
        state = AdamWState.init(params, weight_decay=0.0)
        g = {"w": np.array([0.37])}
        lr = 1e-3
        prev = w.copy()
        for _ in range(1000):
            prev = w.copy()
            adamw_step(params, g, state, lr)
        assert (w - prev)[0] == pytest.approx(-lr, rel=1e-3)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        state = AdamWState.init(p.to_dict())
        adamw_step(p.to_dict(), {k: np.ones_like(v) for k, v in p.to_dict().items()}, state, 0.01)
        save_checkpoint(tmp_path / "ckpt", p, state, "cfg123")
        p2, s2, h = load_checkpoint(tmp_path / "ckpt")
        assert h == "cfg123"
        assert s2.step == 1
        for k in p.to_dict():
            assert np.array_equal(p.to_dict()[k], p2.to_dict()[k])
            assert np.array_equal(state.m[k], s2.m[k])
