"""Tests for the partition-of-unity approximation-rate bench."""

import numpy as np
import pytest

from anchormoe import theory


def test_pou_sums_to_one():
    rng = np.random.default_rng(0)
    for d, m in ((1, 2), (1, 17), (2, 5), (3, 4)):
        lattice = theory.PouLattice(d, m)
        x = rng.uniform(size=(100_000 // (10 if d > 1 else 1), d))
        w = lattice.weights(x)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w >= 0)


def test_bounded_overlap():
    rng = np.random.default_rng(1)
    for d in (1, 2, 3):
        lattice = theory.PouLattice(d, 6)
        x = rng.uniform(size=(5000, d))
        nonzero = (lattice.weights(x) > 0).sum(axis=1)
        assert np.all(nonzero <= 2**d)


def test_constant_reproduction():
    lattice = theory.PouLattice(2, 7)
    f = lambda x: np.full(np.atleast_2d(x).shape[0], 3.25)
    g = theory.pou_interpolant(f, lattice)
    x = np.random.default_rng(2).uniform(size=(2000, 2))
    np.testing.assert_allclose(g(x), 3.25, atol=1e-12)


def test_linear_reproduction():
    # linear hats reproduce affine functions exactly on [0,1]^d
    lattice = theory.PouLattice(2, 9)
    f = lambda x: 2.0 * np.atleast_2d(x)[:, 0] - 0.5 * np.atleast_2d(x)[:, 1] + 1.0
    g = theory.pou_interpolant(f, lattice)
    x = np.random.default_rng(3).uniform(size=(2000, 2))
    np.testing.assert_allclose(g(x), f(x), atol=1e-12)


def test_holder_quotient_bounded():
    rng = np.random.default_rng(4)
    for alpha in (0.5, 1.0):
        for d in (1, 2):
            f = theory.sample_holder(d, alpha, rng, constant=1.0)
            q = f.holder_quotient(100_000, np.random.default_rng(5))
            assert q <= 1.1


def test_cusp_error_decreases_in_k():
    f = lambda x: np.abs(np.atleast_2d(x)[:, 0] - 0.5) ** 0.5
    rng = np.random.default_rng(6)
    errs = [theory.l2_sq_error(f, theory.PouLattice(1, m), 20000, rng) for m in (3, 9, 27)]
    assert errs[0] > errs[1] > errs[2]


def test_rate_experiment_d1():
    res = theory.rate_experiment(1, 1.0, [3, 5, 8, 12, 18, 27], n_mc=8000, n_funcs=5, seed=0)
    assert -2.4 < res["slope"] < -1.6


def test_rate_experiment_alpha_half():
    res = theory.rate_experiment(1, 0.5, [3, 5, 8, 12, 18, 27], n_mc=8000, n_funcs=5, seed=0)
    assert -1.4 < res["slope"] < -0.6


def test_rate_experiment_needs_four_sizes():
    with pytest.raises(ValueError, match="at least 4"):
        theory.rate_experiment(1, 1.0, [2, 4, 8])


def test_alpha_out_of_range():
    with pytest.raises(ValueError, match="alpha"):
        theory.sample_holder(1, 1.5, np.random.default_rng(0))


def test_balance_needs_three_n():
    with pytest.raises(ValueError, match=">= 3"):
        theory.balance_experiment(1, 1.0, [100, 200])


def test_sparse_requires_s_below_d():
    with pytest.raises(ValueError, match="s < d"):
        theory.sparse_rate_experiment(3, 3, 1.0, [2, 3, 4, 5])


def test_sparse_consistent_with_dense_when_s_equals_d():
    # building the lattice on all coordinates of an s=d function reduces to
    # the plain rate experiment
    m_list = [3, 5, 8, 12, 18]
    sparse = theory.sparse_rate_experiment(1, 1, 1.0, m_list, n_mc=8000, n_funcs=5, seed=0, use_full_lattice=True)
    plain = theory.rate_experiment(1, 1.0, m_list, n_mc=8000, n_funcs=5, seed=0)
    assert sparse["slope"] == pytest.approx(plain["slope"], abs=0.3)


def test_sparse_ambient_padding_irrelevant():
    m_list = [3, 5, 8, 12, 18]
    base = theory.sparse_rate_experiment(2, 1, 1.0, m_list, n_mc=8000, n_funcs=5, seed=0)
    padded = theory.sparse_rate_experiment(6, 1, 1.0, m_list, n_mc=8000, n_funcs=5, seed=0)
    assert base["slope"] == pytest.approx(padded["slope"], abs=0.1)


def test_manifold_helix():
    res = theory.manifold_rate_experiment(1, 1.0, [3, 5, 8, 12, 18, 27], n_mc=8000, n_funcs=5, seed=0)
    lo, hi = res["bilipschitz"]
    assert 0 < lo <= hi
    assert -2.4 < res["slope"] < -1.6


def test_lattice_validation():
    with pytest.raises(ValueError):
        theory.PouLattice(0, 4)
    with pytest.raises(ValueError):
        theory.PouLattice(1, 1)
