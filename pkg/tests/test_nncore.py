"""Tests for the numeric core: layer norm, softmax, log-sum-exp, Adam,
parameter storage, and the finite-difference gradient checker."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchormoe import nncore as N


def test_layer_norm_moments():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 7)) * 3 + 2
    z = N.layer_norm(x)
    np.testing.assert_allclose(z.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.var(axis=-1), 1.0, atol=1e-4)  # eps-regularized


def test_layer_norm_backward_matches_fd():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((4, 6))  # fixed cotangent

    def loss(xx):
        return float((N.layer_norm(xx) * w).sum())

    g = N.layer_norm_backward(x, w)
    h = 1e-6
    for i in range(4):
        for j in range(6):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd = (loss(xp) - loss(xm)) / (2 * h)
            assert abs(fd - g[i, j]) < 1e-6


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_simplex(logits):
    p = N.softmax(logits, axis=1)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_shift_invariance():
    x = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(N.softmax(x), N.softmax(x + 1000.0), atol=1e-12)


def test_log_softmax_consistent():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 4)) * 10
    np.testing.assert_allclose(np.exp(N.log_softmax(x, axis=1)), N.softmax(x, axis=1), atol=1e-12)


def test_log_sum_exp_oracle():
    x = np.array([[0.0, np.log(2.0)], [100.0, 100.0]])
    expected = np.array([np.log(3.0), 100.0 + np.log(2.0)])
    np.testing.assert_allclose(N.log_sum_exp(x, axis=1), expected, atol=1e-12)


def test_log_sum_exp_all_neg_inf():
    with pytest.raises(ValueError, match="empty mixture"):
        N.log_sum_exp(np.full((2, 3), -np.inf), axis=1)


def test_param_store_json_roundtrip():
    ps = N.ParamStore()
    ps.add("w", np.arange(6.0).reshape(2, 3) / 7.0)
    ps.add("b", np.array([1e-300, 1.0, np.pi]))
    clone = N.ParamStore.from_json(ps.to_json())
    for name in ps.names():
        np.testing.assert_array_equal(ps[name], clone[name])


def test_param_store_copy_independent():
    ps = N.ParamStore()
    ps.add("w", np.ones(3))
    clone = ps.copy()
    clone["w"][0] = 99.0
    assert ps["w"][0] == 1.0


def test_adam_scalar_oracle():
    # single scalar parameter with constant gradient g: hand-computed updates
    g = 0.3
    ps = N.ParamStore()
    ps.add("w", np.array([1.0]))
    state = N.AdamState(learning_rate=0.01)
    m = v = 0.0
    w = 1.0
    for t in range(1, 4):
        ps.accumulate("w", np.array([g]))
        N.adam_step(ps, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9**t)
        vh = v / (1 - 0.999**t)
        w -= 0.01 * mh / (np.sqrt(vh) + 1e-8)
        assert ps["w"][0] == pytest.approx(w, abs=1e-15)


def test_adam_zeros_grads_after_step():
    ps = N.ParamStore()
    ps.add("w", np.ones(2))
    ps.accumulate("w", np.ones(2))
    N.adam_step(ps, N.AdamState())
    np.testing.assert_array_equal(ps.grads["w"], 0.0)


def test_adam_rejects_nan_grad():
    ps = N.ParamStore()
    ps.add("w", np.ones(2))
    ps.accumulate("w", np.array([np.nan, 0.0]))
    with pytest.raises(FloatingPointError, match="'w'"):
        N.adam_step(ps, N.AdamState())


def test_grad_check_linear_layer():
    # exact-gradient model: analytic and FD agree to ~1e-7
    rng = np.random.default_rng(3)
    x = rng.standard_normal((12, 4))
    y = rng.standard_normal(12)
    ps = N.ParamStore()
    ps.add("w", rng.standard_normal(4))
    ps.add("b", np.zeros(1))

    def f(params):
        pred = x @ params["w"] + params["b"][0]
        r = pred - y
        params.accumulate("w", 2 * x.T @ r / 12)
        params.accumulate("b", np.array([2 * r.mean()]))
        return float((r**2).mean())

    report = N.grad_check(f, ps)
    assert max(report.values()) < 1e-7
