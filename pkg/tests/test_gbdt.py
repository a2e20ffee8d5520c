"""Tests for the boosted-tree anchor model."""

import numpy as np
import pytest

from anchormoe import gbdt as G


def _toy(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, size=(n, 3))
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] ** 2 + 0.1 * rng.standard_normal(n)
    return x, y


def test_single_stump_recovers_step():
    # oracle: depth-1 tree on a clean step function finds the split exactly
    x = np.linspace(0, 1, 100)[:, None]
    y = np.where(x[:, 0] <= 0.5, -1.0, 1.0)
    cfg = G.GbdtConfig(max_depth=1, shrinkage=1.0, max_stages=1, min_samples_leaf=5)
    model = G.fit_gbdt(x, y, cfg)
    tree = model.trees[0]
    assert not tree.is_leaf
    assert abs(tree.threshold - 0.5) < 0.011  # midpoint of adjacent grid values
    np.testing.assert_allclose(model.predict(x), y, atol=1e-12)


def test_boosting_reduces_training_error():
    x, y = _toy()
    model = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=100))
    staged = model.staged_predict(x)
    rmse = np.sqrt(((staged - y[None]) ** 2).mean(axis=1))
    assert rmse[-1] < 0.5 * rmse[0]
    assert np.all(np.diff(rmse) <= 1e-12)  # squared-error boosting never worsens train fit


def test_staged_matches_truncated_predict():
    x, y = _toy(120)
    model = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=30))
    staged = model.staged_predict(x)
    for s in (0, 1, 7, 30):
        np.testing.assert_allclose(staged[s], model.predict(x, n_stages=s), atol=1e-12)


def test_select_stages_min_at_one():
    x, y = _toy(150, seed=1)
    model = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=50))
    # pure-noise validation target: still must return >= 1
    rng = np.random.default_rng(2)
    t = G.select_stages(model, x[:40], rng.standard_normal(40))
    assert 1 <= t <= 50


def test_select_stages_is_argmin():
    x, y = _toy(300, seed=3)
    model = G.fit_gbdt(x[:200], y[:200], G.GbdtConfig(max_stages=80))
    t = G.select_stages(model, x[200:], y[200:])
    staged = model.staged_predict(x[200:])
    rmse = np.sqrt(((staged - y[200:][None]) ** 2).mean(axis=1))
    assert rmse[t] == rmse[1:].min()


def test_min_samples_leaf():
    x, y = _toy(40, seed=4)
    cfg = G.GbdtConfig(max_depth=6, max_stages=1, min_samples_leaf=8)

    def leaf_counts(node, idx, xs):
        if node.is_leaf:
            return [idx.size]
        mask = xs[idx, node.feature] <= node.threshold
        return leaf_counts(node.left, idx[mask], xs) + leaf_counts(node.right, idx[~mask], xs)

    model = G.fit_gbdt(x, y, cfg)
    counts = leaf_counts(model.trees[0], np.arange(40), x)
    assert min(counts) >= 8


def test_json_roundtrip():
    x, y = _toy(80, seed=5)
    model = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=12))
    clone = G.GbdtModel.from_json(model.to_json())
    np.testing.assert_array_equal(model.predict(x), clone.predict(x))


def test_deterministic():
    x, y = _toy(100, seed=6)
    a = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=20)).predict(x)
    b = G.fit_gbdt(x, y, G.GbdtConfig(max_stages=20)).predict(x)
    np.testing.assert_array_equal(a, b)


def test_fit_anchor_two_step():
    x, y = _toy(400, seed=7)
    final, t_star = G.fit_anchor(x[:200], y[:200], x[200:280], y[200:280], x[:280], y[:280])
    assert final.n_stages == t_star >= 1


def test_config_validation():
    with pytest.raises(ValueError):
        G.GbdtConfig(max_depth=0).validate()
    with pytest.raises(ValueError):
        G.GbdtConfig(shrinkage=0.0).validate()
