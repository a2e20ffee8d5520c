"""Empirical bench for partition-of-unity approximation rates.

Tensor-product linear hat weights on a uniform lattice over [0,1]^d form
an exact partition of unity with overlap at most 2^d. Interpolating
Hölder-α functions at the lattice nodes gives squared L2 error scaling
as K^(-2α/d); balancing against a K/N estimation term gives the optimal
window count K* scaling as N^(d/(2α+d)). Sparse and manifold variants
replace d with the effective dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PouLattice:
    """Uniform lattice of m nodes per axis on [0,1]^d with linear hat weights.

    K = m^d windows; hats on a uniform grid containing both endpoints sum
    to one exactly, and at most 2 per axis (2^d total) are nonzero anywhere.
    """

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1 or self.m < 2:
            raise ValueError("need d >= 1 and m >= 2 nodes per axis")

    @property
    def k_windows(self) -> int:
        return self.m**self.d

    @property
    def mesh(self) -> float:
        return 1.0 / (self.m - 1)

    def nodes(self) -> np.ndarray:
        """(K, d) lattice node coordinates, last axis fastest."""
        axis = np.linspace(0.0, 1.0, self.m)
        grids = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def weights(self, x: np.ndarray) -> np.ndarray:
        """(N, K) hat weights; rows sum to one exactly on [0,1]^d."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        axis = np.linspace(0.0, 1.0, self.m)
        h = self.mesh
        out = np.ones((n, 1))
        for j in range(self.d):
            hat = np.maximum(0.0, 1.0 - np.abs(x[:, j : j + 1] - axis[None, :]) / h)
            out = (out[:, :, None] * hat[:, None, :]).reshape(n, -1)
        return out


@dataclass(frozen=True)
class HolderFunction:
    """Random lacunary trigonometric series, the standard generator whose
    interpolation error saturates the Hölder-alpha approximation rate:

        f(x) = sum_m a_m 2^(-alpha*m) cos(2*pi*2^m <u_m, x> + phi_m)

    with unit directions u_m and random signs/phases. Amplitudes are
    rescaled so the empirical Hölder quotient equals the target constant.
    """

    alpha: float
    amps: np.ndarray  # (M,)
    dirs: np.ndarray  # (M, d)
    freqs: np.ndarray  # (M,)
    phases: np.ndarray  # (M,)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        arg = 2.0 * np.pi * (x @ self.dirs.T) * self.freqs[None, :] + self.phases[None, :]
        return np.cos(arg) @ self.amps

    def holder_quotient(self, n_pairs: int, rng: np.random.Generator) -> float:
        """Empirical sup |f(x)-f(x')| / ||x-x'||^alpha over pairs drawn at
        mixed separation scales (quotients peak at small separations)."""
        d = self.dirs.shape[1]
        a = rng.uniform(size=(n_pairs, d))
        scale = 10.0 ** rng.uniform(-5, 0, size=(n_pairs, 1))
        step = rng.standard_normal((n_pairs, d))
        step /= np.linalg.norm(step, axis=1, keepdims=True)
        b = np.clip(a + scale * step, 0.0, 1.0)
        num = np.abs(self(a) - self(b))
        den = np.sqrt(((a - b) ** 2).sum(axis=1)) ** self.alpha
        ok = den > 1e-12
        return float((num[ok] / den[ok]).max())


def sample_holder(
    d: int,
    alpha: float,
    rng: np.random.Generator,
    n_levels: int = 13,
    constant: float = 1.0,
) -> HolderFunction:
    """Random Hölder-alpha series with empirical Hölder constant `constant`."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0,1] for this generator")
    levels = np.arange(n_levels)
    amps = rng.choice([-1.0, 1.0], size=n_levels) * 2.0 ** (-alpha * levels)
    dirs = rng.standard_normal((n_levels, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    freqs = 2.0**levels
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_levels)
    f = HolderFunction(alpha, amps, dirs, freqs, phases)
    # normalize by the empirical quotient with a small margin so independent
    # re-measurement stays within 1.1x the target constant
    q = 1.05 * f.holder_quotient(50_000, rng)
    return HolderFunction(alpha, amps * (constant / q), dirs, freqs, phases)


def pou_interpolant(f, lattice: PouLattice):
    """Interpolant f_tilde(x) = sum_j w_j(x) f(node_j)."""
    node_vals = f(lattice.nodes())

    def interpolant(x: np.ndarray) -> np.ndarray:
        return lattice.weights(x) @ node_vals

    return interpolant


def l2_sq_error(f, lattice: PouLattice, n_mc: int, rng: np.random.Generator) -> float:
    """Monte Carlo squared L2 error of the PoU interpolant of f."""
    x = rng.uniform(size=(n_mc, lattice.d))
    g = pou_interpolant(f, lattice)
    return float(((f(x) - g(x)) ** 2).mean())


def _ols_slope(log_x: np.ndarray, log_y: np.ndarray) -> float:
    return float(np.polyfit(log_x, log_y, 1)[0])


def rate_experiment(
    d: int,
    alpha: float,
    m_list: list,
    n_mc: int = 20000,
    n_funcs: int = 10,
    seed: int = 0,
) -> dict:
    """Slope of log squared L2 error vs log K over a geometric lattice family.

    Returns {"slope", "k_list", "errors"} with errors averaged over
    `n_funcs` random Hölder functions. Target slope: -2*alpha/d.
    """
    if len(m_list) < 4:
        raise ValueError("need at least 4 lattice sizes")
    rng = np.random.default_rng(seed)
    k_list = np.array([m**d for m in m_list], dtype=np.float64)
    errors = np.zeros(len(m_list))
    for _ in range(n_funcs):
        f = sample_holder(d, alpha, rng)
        for i, m in enumerate(m_list):
            errors[i] += l2_sq_error(f, PouLattice(d, m), n_mc, rng)
    errors /= n_funcs
    slope = _ols_slope(np.log(k_list), np.log(errors))
    return {"slope": slope, "k_list": k_list.tolist(), "errors": errors.tolist()}


def _local_constant_fit(lattice: PouLattice, x: np.ndarray, y: np.ndarray):
    """Per-window constants by weighted least squares (weighted means)."""
    w = lattice.weights(x)  # (N, K)
    num = w.T @ y
    den = w.sum(axis=0)
    coef = np.where(den > 0, num / np.maximum(den, 1e-12), 0.0)

    def estimator(xq: np.ndarray) -> np.ndarray:
        return lattice.weights(xq) @ coef

    return estimator


def balance_experiment(
    d: int,
    alpha: float,
    n_list: list,
    m_grid: list | None = None,
    noise_sigma: float = 0.1,
    n_mc: int = 20000,
    n_funcs: int = 10,
    seed: int = 0,
) -> dict:
    """Empirical optimal window count K*(N) and its log-log exponent in N.

    For each N, draws noisy samples y = f(x) + noise, fits per-window local
    constants for each lattice size, and records the K minimizing the Monte
    Carlo risk against the true f. Target exponent: d/(2*alpha + d).
    """
    if len(n_list) < 3:
        raise ValueError("need >= 3 values of N")
    rng = np.random.default_rng(seed)
    if m_grid is None:
        # keep K = m^d tractable: ~geometric in K up to a few thousand windows
        full = [2, 3, 4, 6, 8, 11, 16, 23, 32, 45, 64, 91, 128]
        k_cap = 4096
        m_grid = [m for m in full if m**d <= k_cap]
    k_grid = np.array([m**d for m in m_grid], dtype=np.float64)
    log_k_star = np.zeros(len(n_list))
    risk_tables = []
    for i, n in enumerate(n_list):
        logs = []
        risks_acc = np.zeros(len(m_grid))
        for _ in range(n_funcs):
            f = sample_holder(d, alpha, rng)
            x = rng.uniform(size=(n, d))
            y = f(x) + noise_sigma * rng.standard_normal(n)
            xq = rng.uniform(size=(n_mc, d))
            fq = f(xq)
            risks = np.array(
                [(((_local_constant_fit(PouLattice(d, m), x, y))(xq) - fq) ** 2).mean() for m in m_grid]
            )
            risks_acc += risks
            logs.append(np.log(k_grid[int(np.argmin(risks))]))
        log_k_star[i] = np.mean(logs)
        risk_tables.append((risks_acc / n_funcs).tolist())
    exponent = _ols_slope(np.log(np.array(n_list, dtype=np.float64)), log_k_star)
    return {
        "exponent": exponent,
        "n_list": list(n_list),
        "log_k_star": log_k_star.tolist(),
        "risks": risk_tables,
    }


def sparse_rate_experiment(
    d: int,
    s: int,
    alpha: float,
    m_list: list,
    n_mc: int = 20000,
    n_funcs: int = 10,
    seed: int = 0,
    use_full_lattice: bool = False,
) -> dict:
    """Rate for f(x) = g(x_S) depending only on the first s of d coordinates.

    With the lattice built on the s active coordinates (oracle support),
    the slope target is -2*alpha/s regardless of d. `use_full_lattice`
    builds the lattice on all d coordinates instead (curse-of-dimension
    control; slope degrades toward -2*alpha/d).
    """
    if s >= d and not use_full_lattice:
        raise ValueError("need s < d for the sparse setting")
    rng = np.random.default_rng(seed)
    dim = d if use_full_lattice else s
    k_list = np.array([m**dim for m in m_list], dtype=np.float64)
    errors = np.zeros(len(m_list))
    for _ in range(n_funcs):
        g = sample_holder(s, alpha, rng)
        for i, m in enumerate(m_list):
            lattice = PouLattice(dim, m)
            if use_full_lattice:
                x = rng.uniform(size=(n_mc, d))
                f_full = lambda xx: g(xx[:, :s])
                approx = pou_interpolant(f_full, lattice)(x)
                xs = x[:, :s]
            else:
                # the d-s padding coordinates are inert: draw only the active
                # ones, so the result is identical for every ambient d
                xs = rng.uniform(size=(n_mc, s))
                approx = pou_interpolant(g, lattice)(xs)
            errors[i] += float(((g(xs) - approx) ** 2).mean())
    errors /= n_funcs
    slope = _ols_slope(np.log(k_list), np.log(errors))
    return {"slope": slope, "k_list": k_list.tolist(), "errors": errors.tolist()}


def helix_embedding(t: np.ndarray) -> np.ndarray:
    """Bi-Lipschitz curve [0,1] -> R^3 (one helix turn)."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t), 2.0 * t], axis=1)


def bilipschitz_constants(embedding, d0: int, n_pairs: int, rng: np.random.Generator):
    a = rng.uniform(size=(n_pairs, d0))
    b = rng.uniform(size=(n_pairs, d0))
    intrinsic = np.sqrt(((a - b) ** 2).sum(axis=1))
    ambient = np.sqrt(((embedding(a[:, 0] if d0 == 1 else a) - embedding(b[:, 0] if d0 == 1 else b)) ** 2).sum(axis=1))
    ok = intrinsic > 1e-9
    ratios = ambient[ok] / intrinsic[ok]
    return float(ratios.min()), float(ratios.max())


def manifold_rate_experiment(
    d0: int,
    alpha: float,
    m_list: list,
    embedding=helix_embedding,
    n_mc: int = 20000,
    n_funcs: int = 10,
    seed: int = 0,
) -> dict:
    """Rate for a Hölder function on a d0-manifold embedded in ambient space;
    the PoU lives in intrinsic coordinates, so the slope target is -2*alpha/d0.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bilipschitz_constants(embedding, d0, 100_000, rng)
    if lo <= 0:
        raise ValueError("embedding is not bi-Lipschitz on the sampled pairs")
    base = rate_experiment(d0, alpha, m_list, n_mc=n_mc, n_funcs=n_funcs, seed=seed)
    base["bilipschitz"] = (lo, hi)
    return base
