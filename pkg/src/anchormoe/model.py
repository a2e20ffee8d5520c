"""Anchored mixture-of-experts density model.

Inputs are standardized features with the standardized anchor prediction
appended as the last column. A linear projection + layer norm maps inputs
to a low-dimensional latent; metric windows and a dot-product router are
fused in log space into gates; a smoothed top-k restriction selects
experts; each expert is a mixture density network whose means are offsets
from the anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import ParamStore, layer_norm, log_softmax, log_sum_exp, softmax

LOG_2PI = float(np.log(2.0 * np.pi))

MEAN_MODES = ("anchor_delta", "anchor_only", "free")


@dataclass(frozen=True)
class MoeConfig:
    latent_dim: int = 2
    n_windows: int = 8
    top_k: int = 2
    n_components: int = 3
    hidden: int = 128
    router_dim: int = 16
    temperature: float = 1.0
    gate_floor: float = 0.05
    window_eps: float = 1e-12
    stab_eps: float = 1e-12
    sigma_min: float = 0.05
    sigma_max: float = 1.0
    t_clamp: float = 3.0
    mean_mode: str = "anchor_delta"
    use_router: bool = True  # False fixes router logits at zero (window-only gates)

    def validate(self) -> None:
        if not 1 <= self.top_k <= self.n_windows:
            raise ValueError(f"top_k must be in [1, {self.n_windows}], got {self.top_k}")
        if self.mean_mode not in MEAN_MODES:
            raise ValueError(f"mean_mode must be one of {MEAN_MODES}")
        if not 0.0 <= self.gate_floor < 1.0:
            raise ValueError("gate_floor must be in [0,1)")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        for name in ("latent_dim", "n_windows", "n_components", "hidden", "router_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _kmeans_pp_centers(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding (no Lloyd refinement) on latent points z."""
    n = z.shape[0]
    if n <= k:
        reps = np.resize(np.arange(n), k)
        return z[reps] + 1e-3 * rng.standard_normal((k, z.shape[1]))
    centers = [z[rng.integers(n)]]
    d2 = ((z - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(z[rng.integers(n)])
            continue
        probs = d2 / total
        idx = rng.choice(n, p=probs)
        centers.append(z[idx])
        d2 = np.minimum(d2, ((z - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def init_parameters(
    input_dim: int,
    config: MoeConfig,
    rng: np.random.Generator,
    x_init: np.ndarray | None = None,
) -> ParamStore:
    """Initialize parameters; the delta heads start at zero so the model's
    predictive mean equals the anchor at initialization.

    If `x_init` (standardized, anchor-augmented rows) is given, window
    centers are seeded by k-means++ in the initial latent space.
    """
    config.validate()
    d, k, c, h, r = (
        config.latent_dim,
        config.n_windows,
        config.n_components,
        config.hidden,
        config.router_dim,
    )
    params = ParamStore()

    def glorot(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    params.add("proj_w", glorot((input_dim, d), input_dim, d))
    params.add("proj_b", np.zeros(d))

    if x_init is not None and x_init.shape[0] >= 2:
        z0 = layer_norm(x_init @ params["proj_w"] + params["proj_b"])
        centers = _kmeans_pp_centers(z0, k, rng)
    else:
        centers = rng.standard_normal((k, d))
    params.add("win_centers", centers)
    params.add("win_log_scales", np.zeros((k, d)))

    params.add("rout_wq", glorot((d, r), d, r))
    params.add("rout_keys", rng.standard_normal((k, r)) / np.sqrt(r))

    params.add("exp_w1", glorot((k, input_dim, h), input_dim, h))
    params.add("exp_b1", np.zeros((k, h)))
    params.add("exp_w_pi", glorot((k, h, c), h, c))
    params.add("exp_b_pi", np.zeros((k, c)))
    params.add("exp_w_mu", np.zeros((k, h, c)))
    params.add("exp_b_mu", np.zeros((k, c)))
    params.add("exp_w_t", glorot((k, h, c), h, c) * 0.1)
    params.add("exp_b_t", np.full((k, c), -0.7))
    return params


def fuse_gates(log_window: np.ndarray, router_logits: np.ndarray, config: MoeConfig):
    """Log-space gate fusion followed by smoothed top-k restriction.

    Returns (alpha_bar, cache). The top-k mask is chosen on the fused
    softmax and treated as a constant for gradients.
    """
    fused = log_window + router_logits
    alpha = softmax(fused, axis=1)
    k = config.top_k
    # mask the k largest gates per row (ties broken by index via argsort)
    order = np.argsort(-alpha, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(alpha)
    np.put_along_axis(mask, order, 1.0, axis=1)
    masked = alpha * mask
    denom = masked.sum(axis=1, keepdims=True) + config.stab_eps
    eps = config.gate_floor
    alpha_bar = (1.0 - eps) * masked / denom + (eps / k) * mask
    cache = {"fused": fused, "alpha": alpha, "mask": mask, "denom": denom}
    return alpha_bar, cache


def forward(params: ParamStore, x: np.ndarray, anchor_z: np.ndarray, config: MoeConfig) -> dict:
    """Full forward pass; returns a cache of every intermediate needed for
    the analytic backward pass and for building the predictive mixture.

    x: (N, p) standardized features with anchor appended (last column).
    anchor_z: (N,) standardized anchor predictions.
    """
    x = np.asarray(x, dtype=np.float64)
    anchor_z = np.asarray(anchor_z, dtype=np.float64)
    n = x.shape[0]

    u = x @ params["proj_w"] + params["proj_b"]  # (N, D)
    z = layer_norm(u)

    centers = params["win_centers"]  # (K, D)
    scales = np.exp(params["win_log_scales"])  # (K, D)
    diff = z[:, None, :] - centers[None, :, :]  # (N, K, D)
    scaled = diff / scales[None, :, :]
    window_logits = -0.5 * (scaled**2).sum(axis=2)  # (N, K)
    log_w = log_softmax(window_logits, axis=1)
    log_floor = np.log(config.window_eps)
    floored = log_w < log_floor
    log_window = np.where(floored, log_floor, log_w)

    zq = z @ params["rout_wq"]  # (N, r)
    router_scale = 1.0 / (np.sqrt(config.router_dim) * config.temperature)
    if config.use_router:
        router_logits = (zq @ params["rout_keys"].T) * router_scale  # (N, K)
    else:
        router_logits = np.zeros((n, config.n_windows))

    alpha_bar, gate_cache = fuse_gates(log_window, router_logits, config)

    hidden_pre = np.einsum("np,kph->nkh", x, params["exp_w1"]) + params["exp_b1"][None]
    hidden = np.tanh(hidden_pre)  # (N, K, H)

    pi_logits = np.einsum("nkh,khc->nkc", hidden, params["exp_w_pi"]) + params["exp_b_pi"][None]
    log_pi = log_softmax(pi_logits, axis=2)

    delta = np.einsum("nkh,khc->nkc", hidden, params["exp_w_mu"]) + params["exp_b_mu"][None]
    if config.mean_mode == "anchor_delta":
        mu = anchor_z[:, None, None] + delta
    elif config.mean_mode == "anchor_only":
        mu = np.broadcast_to(anchor_z[:, None, None], delta.shape).copy()
    else:  # free
        mu = delta

    t_raw = np.einsum("nkh,khc->nkc", hidden, params["exp_w_t"]) + params["exp_b_t"][None]
    t = np.clip(t_raw, -config.t_clamp, config.t_clamp)
    sigma_unclipped = np.exp(t)
    sigma = np.clip(sigma_unclipped, config.sigma_min, config.sigma_max)
    # gradient flows only where neither the log-scale nor sigma clamp binds
    t_interior = (np.abs(t_raw) < config.t_clamp) & (sigma_unclipped > config.sigma_min) & (
        sigma_unclipped < config.sigma_max
    )

    log_gate = np.where(gate_cache["mask"] > 0, np.log(np.maximum(alpha_bar, 1e-300)), -np.inf)

    return {
        "x": x,
        "anchor_z": anchor_z,
        "n": n,
        "u": u,
        "z": z,
        "diff": diff,
        "scales": scales,
        "scaled": scaled,
        "window_logits": window_logits,
        "log_w": log_w,
        "floored": floored,
        "zq": zq,
        "router_scale": router_scale,
        "router_logits": router_logits,
        "alpha_bar": alpha_bar,
        "log_gate": log_gate,
        "gate": gate_cache,
        "hidden": hidden,
        "pi_logits": pi_logits,
        "log_pi": log_pi,
        "delta": delta,
        "mu": mu,
        "t_raw": t_raw,
        "t": t,
        "sigma": sigma,
        "t_interior": t_interior,
    }


def log_density(cache: dict, y: np.ndarray) -> tuple[np.ndarray, dict]:
    """Per-row log density log p(y|x) under the fused mixture.

    Returns (logp, extras) where extras carries the component log terms
    needed to form responsibilities in the backward pass.
    """
    y = np.asarray(y, dtype=np.float64)
    mu, sigma = cache["mu"], cache["sigma"]
    resid = (y[:, None, None] - mu) / sigma
    comp_log_norm = -0.5 * LOG_2PI - np.log(sigma) - 0.5 * resid**2  # (N, K, C)
    comp_log = cache["log_gate"][:, :, None] + cache["log_pi"] + comp_log_norm
    flat = comp_log.reshape(comp_log.shape[0], -1)
    logp = log_sum_exp(flat, axis=1)
    return logp, {"comp_log": comp_log, "resid": resid, "y": y}


@dataclass(frozen=True)
class MixtureDensity:
    """Per-row Gaussian mixture p(y) = sum_i weights[i] N(y; means[i], sigmas[i]^2).

    Arrays are (N, M) with M = n_windows * n_components; weights include
    the gate x component products and sum to one up to the gate-smoothing
    stabilizer.
    """

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    def logpdf(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        resid = (y[:, None] - self.means) / self.sigmas
        comp = -0.5 * LOG_2PI - np.log(self.sigmas) - 0.5 * resid**2
        with np.errstate(divide="ignore"):
            logw = np.where(self.weights > 0, np.log(np.maximum(self.weights, 1e-300)), -np.inf)
        return log_sum_exp(logw + comp, axis=1)

    def pdf(self, y: np.ndarray) -> np.ndarray:
        return np.exp(self.logpdf(y))

    def mean(self) -> np.ndarray:
        return (self.weights * self.means).sum(axis=1)

    def variance(self) -> np.ndarray:
        m = self.mean()
        second = (self.weights * (self.means**2 + self.sigmas**2)).sum(axis=1)
        return second - m**2

    def cdf(self, y: np.ndarray) -> np.ndarray:
        from scipy.special import ndtr

        y = np.asarray(y, dtype=np.float64)
        return (self.weights * ndtr((y[:, None] - self.means) / self.sigmas)).sum(axis=1)

    def quantile(self, q: float, tol: float = 1e-9, max_iter: int = 200) -> np.ndarray:
        """Per-row quantile by bisection on the mixture CDF."""
        if not 0.0 < q < 1.0:
            raise ValueError("quantile level must be in (0,1)")
        lo = (self.means - 12.0 * self.sigmas).min(axis=1)
        hi = (self.means + 12.0 * self.sigmas).max(axis=1)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)


def predictive_mixture(cache: dict) -> MixtureDensity:
    """Flatten the fused gates and expert components into one mixture per row."""
    gates = cache["alpha_bar"][:, :, None]  # (N, K, 1)
    pi = np.exp(cache["log_pi"])  # (N, K, C)
    weights = (gates * pi).reshape(cache["n"], -1)
    means = cache["mu"].reshape(cache["n"], -1)
    sigmas = cache["sigma"].reshape(cache["n"], -1)
    return MixtureDensity(weights, means, sigmas)


def predict(params: ParamStore, x: np.ndarray, anchor_z: np.ndarray, config: MoeConfig) -> MixtureDensity:
    return predictive_mixture(forward(params, x, anchor_z, config))
