"""Tests for the mixture-of-experts model: gates, density, quantiles."""

import numpy as np
import pytest

from anchormoe import model as M


def _setup(seed=0, n=30, p=5, **overrides):
    rng = np.random.default_rng(seed)
    cfg = M.MoeConfig(hidden=8, n_windows=6, top_k=2, n_components=2, router_dim=4, **overrides)
    x = rng.standard_normal((n, p))
    anchor = rng.standard_normal(n)
    params = M.init_parameters(p, cfg, rng, x_init=x)
    return cfg, params, x, anchor, rng


def test_config_validation():
    with pytest.raises(ValueError, match="top_k"):
        M.MoeConfig(n_windows=4, top_k=5).validate()
    with pytest.raises(ValueError, match="mean_mode"):
        M.MoeConfig(mean_mode="bogus").validate()
    with pytest.raises(ValueError, match="sigma"):
        M.MoeConfig(sigma_min=2.0, sigma_max=1.0).validate()


def test_gate_simplex_and_sparsity():
    cfg, params, x, anchor, _ = _setup()
    cache = M.forward(params, x, anchor, cfg)
    gates = cache["alpha_bar"]
    np.testing.assert_allclose(gates.sum(axis=1), 1.0, atol=1e-10)
    assert np.all((gates > 0).sum(axis=1) == cfg.top_k)
    active = gates[gates > 0]
    assert np.all(active >= cfg.gate_floor / cfg.top_k - 1e-12)


def test_gate_mask_matches_largest_fused():
    cfg, params, x, anchor, _ = _setup(seed=1)
    cache = M.forward(params, x, anchor, cfg)
    alpha = cache["gate"]["alpha"]
    mask = cache["gate"]["mask"]
    for i in range(x.shape[0]):
        top = set(np.argsort(-alpha[i])[: cfg.top_k])
        assert set(np.flatnonzero(mask[i])) == top


def test_anchor_identity_at_init():
    cfg, params, x, anchor, _ = _setup(seed=2)
    mix = M.predict(params, x, anchor, cfg)
    np.testing.assert_allclose(mix.mean(), anchor, atol=1e-9)


def test_free_mode_ignores_anchor():
    cfg, params, x, anchor, _ = _setup(seed=3, mean_mode="free")
    a = M.predict(params, x, anchor, cfg).logpdf(np.zeros(x.shape[0]))
    b = M.predict(params, x, anchor + 100.0, cfg).logpdf(np.zeros(x.shape[0]))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_no_router_gates_window_only():
    cfg, params, x, anchor, _ = _setup(seed=4, use_router=False)
    cache = M.forward(params, x, anchor, cfg)
    np.testing.assert_array_equal(cache["router_logits"], 0.0)
    # fused logits reduce to the floored log window weights
    np.testing.assert_allclose(cache["gate"]["fused"], np.where(
        cache["floored"], np.log(cfg.window_eps), cache["log_w"]), atol=1e-12)


def test_sigma_respects_clamp():
    cfg, params, x, anchor, rng = _setup(seed=5)
    params["exp_b_t"][...] = 10.0  # would exceed the clamp without clipping
    cache = M.forward(params, x, anchor, cfg)
    assert np.all(cache["sigma"] <= cfg.sigma_max + 1e-15)
    assert np.all(cache["sigma"] >= cfg.sigma_min - 1e-15)
    assert not cache["t_interior"].any()


def test_density_normalizes():
    cfg, params, x, anchor, _ = _setup(seed=6, n=5)
    mix = M.predict(params, x, anchor, cfg)
    grid = np.linspace(-30, 30, 60001)
    for i in range(5):
        row = M.MixtureDensity(mix.weights[i : i + 1], mix.means[i : i + 1], mix.sigmas[i : i + 1])
        pdf = np.array([row.pdf(np.array([t]))[0] for t in grid[::100]])
        total = np.trapezoid(pdf, grid[::100])
        assert abs(total - 1.0) < 1e-4  # coarse grid; acceptance test uses fine quadrature


def test_mixture_mean_variance_oracle():
    w = np.array([[0.25, 0.75]])
    m = np.array([[0.0, 2.0]])
    s = np.array([[1.0, 0.5]])
    mix = M.MixtureDensity(w, m, s)
    assert mix.mean()[0] == pytest.approx(1.5)
    # E[y^2] = .25*(0+1) + .75*(4+.25) = 3.4375; var = 3.4375 - 2.25
    assert mix.variance()[0] == pytest.approx(1.1875)


def test_quantile_cdf_contract():
    rng = np.random.default_rng(7)
    w = rng.dirichlet(np.ones(4), size=3)
    m = rng.standard_normal((3, 4)) * 2
    s = rng.uniform(0.05, 1.0, size=(3, 4))
    mix = M.MixtureDensity(w, m, s)
    for q in (0.025, 0.5, 0.975):
        vals = mix.quantile(q)
        np.testing.assert_allclose(mix.cdf(vals), q, atol=1e-6)
    with pytest.raises(ValueError):
        mix.quantile(1.5)


def test_log_density_matches_mixture_logpdf():
    cfg, params, x, anchor, rng = _setup(seed=8)
    y = rng.standard_normal(x.shape[0])
    cache = M.forward(params, x, anchor, cfg)
    logp, _ = M.log_density(cache, y)
    mix = M.predictive_mixture(cache)
    np.testing.assert_allclose(logp, mix.logpdf(y), atol=1e-9)


def test_forward_deterministic():
    cfg, params, x, anchor, _ = _setup(seed=9)
    a = M.forward(params, x, anchor, cfg)["alpha_bar"]
    b = M.forward(params, x, anchor, cfg)["alpha_bar"]
    np.testing.assert_array_equal(a, b)
