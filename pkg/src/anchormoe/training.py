"""NLL training for the mixture-of-experts model.

The objective is mean negative log-likelihood on z-scored targets plus
mild regularizers: window log-scale shrinkage, delta-head shrinkage,
a gate entropy bonus, and a load-balance penalty on mean gate usage.
All gradients are computed analytically in reverse mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import model as M
from .nncore import AdamState, ParamStore, adam_step, layer_norm_backward, softmax

FULL_BATCH_LIMIT = 2048
MINI_BATCH_SIZE = 256


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 400
    batch_size: int = 0  # 0 = auto: full batch up to FULL_BATCH_LIMIT rows
    lambda_scale: float = 1e-4
    lambda_delta: float = 1e-4
    lambda_entropy: float = 1e-3
    lambda_load: float = 1e-2
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        for name in ("lambda_scale", "lambda_delta", "lambda_entropy", "lambda_load"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class TrainTrace:
    train_objective: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based epoch index with the lowest validation NLL
    best_val_nll: float = np.inf


class DivergenceError(RuntimeError):
    """Raised when the objective or a gradient becomes non-finite."""


def mean_nll(params: ParamStore, x, anchor_z, y, config: M.MoeConfig) -> float:
    cache = M.forward(params, x, anchor_z, config)
    logp, _ = M.log_density(cache, y)
    return float(-logp.mean())


def objective_and_grads(
    params: ParamStore,
    x: np.ndarray,
    anchor_z: np.ndarray,
    y: np.ndarray,
    config: M.MoeConfig,
    train_cfg: TrainConfig,
) -> tuple[float, float]:
    """Accumulate gradients of the regularized objective into `params`.

    Returns (objective, mean_nll) for the batch.
    """
    n = x.shape[0]
    cache = M.forward(params, x, anchor_z, config)
    try:
        logp, extras = M.log_density(cache, y)
    except ValueError as exc:
        raise DivergenceError(f"density collapsed: {exc}") from exc
    nll = float(-logp.mean())

    log_scales = params["win_log_scales"]
    alpha_bar = cache["alpha_bar"]
    mask = cache["gate"]["mask"]
    delta = cache["delta"]

    reg_scale = train_cfg.lambda_scale * float((log_scales**2).sum())
    reg_delta = (
        train_cfg.lambda_delta * float((delta**2).mean())
        if config.mean_mode == "anchor_delta"
        else 0.0
    )
    # gate entropy bonus: adds sum(a log a) per row, 0*log 0 := 0 off-mask
    safe = np.where(mask > 0, np.maximum(alpha_bar, 1e-300), 1.0)
    neg_entropy = float((alpha_bar * np.log(safe)).sum(axis=1).mean())
    reg_entropy = train_cfg.lambda_entropy * neg_entropy
    k_windows = config.n_windows
    mean_gate = alpha_bar.mean(axis=0)  # (K,)
    reg_load = train_cfg.lambda_load * k_windows * float(((mean_gate - 1.0 / k_windows) ** 2).sum())

    objective = nll + reg_scale + reg_delta + reg_entropy + reg_load
    if not np.isfinite(objective):
        raise DivergenceError(f"non-finite objective: {objective}")

    # ---- backward: NLL ----
    comp_log = extras["comp_log"]  # (N, K, C), -inf off-mask
    resid = extras["resid"]
    with np.errstate(invalid="ignore"):
        resp = np.exp(comp_log - logp[:, None, None])
    resp = np.where(np.isfinite(comp_log), resp, 0.0)
    g_comp = -resp / n  # dL/d comp_log

    g_log_gate = g_comp.sum(axis=2)  # (N, K)
    g_log_pi = g_comp
    g_mu = g_comp * resid / cache["sigma"]
    g_t = g_comp * (resid**2 - 1.0) * cache["t_interior"]

    # component-weight head (log-softmax over components)
    pi = np.exp(cache["log_pi"])
    g_pi_logits = g_log_pi - pi * g_log_pi.sum(axis=2, keepdims=True)

    if config.mean_mode == "anchor_only":
        g_delta = np.zeros_like(g_mu)
    else:
        g_delta = g_mu
    if reg_delta:
        g_delta = g_delta + (2.0 * train_cfg.lambda_delta / delta.size) * delta

    hidden = cache["hidden"]
    xb = cache["x"]
    params.accumulate("exp_w_pi", np.einsum("nkh,nkc->khc", hidden, g_pi_logits))
    params.accumulate("exp_b_pi", g_pi_logits.sum(axis=0))
    params.accumulate("exp_w_mu", np.einsum("nkh,nkc->khc", hidden, g_delta))
    params.accumulate("exp_b_mu", g_delta.sum(axis=0))
    params.accumulate("exp_w_t", np.einsum("nkh,nkc->khc", hidden, g_t))
    params.accumulate("exp_b_t", g_t.sum(axis=0))

    g_hidden = (
        np.einsum("nkc,khc->nkh", g_pi_logits, params["exp_w_pi"])
        + np.einsum("nkc,khc->nkh", g_delta, params["exp_w_mu"])
        + np.einsum("nkc,khc->nkh", g_t, params["exp_w_t"])
    )
    g_hidden_pre = g_hidden * (1.0 - hidden**2)
    params.accumulate("exp_w1", np.einsum("np,nkh->kph", xb, g_hidden_pre))
    params.accumulate("exp_b1", g_hidden_pre.sum(axis=0))

    # ---- gates ----
    with np.errstate(divide="ignore", invalid="ignore"):
        g_alpha_bar = np.where(mask > 0, g_log_gate / np.maximum(alpha_bar, 1e-300), 0.0)
    if train_cfg.lambda_entropy:
        g_alpha_bar += np.where(
            mask > 0, (train_cfg.lambda_entropy / n) * (np.log(safe) + 1.0), 0.0
        )
    if train_cfg.lambda_load:
        g_alpha_bar += (2.0 * train_cfg.lambda_load * k_windows / n) * (
            mean_gate - 1.0 / k_windows
        )[None, :]

    # smoothed top-k backward (mask treated as constant)
    alpha = cache["gate"]["alpha"]
    denom = cache["gate"]["denom"]
    eps = config.gate_floor
    gm = g_alpha_bar * mask
    inner = (gm * alpha * mask).sum(axis=1, keepdims=True)
    g_alpha = (1.0 - eps) * mask * (gm / denom - inner / denom**2)

    # fused softmax backward
    g_fused = alpha * (g_alpha - (g_alpha * alpha).sum(axis=1, keepdims=True))

    # router branch
    if config.use_router:
        router_scale = cache["router_scale"]
        g_zq = (g_fused @ params["rout_keys"]) * router_scale
        params.accumulate("rout_keys", (g_fused.T @ cache["zq"]) * router_scale)
        params.accumulate("rout_wq", cache["z"].T @ g_zq)
        g_z = g_zq @ params["rout_wq"].T
    else:
        g_z = np.zeros_like(cache["z"])

    # window branch: floor, log-softmax, metric kernel
    g_log_window = np.where(cache["floored"], 0.0, g_fused)
    w = np.exp(cache["log_w"])
    g_window_logits = g_log_window - w * g_log_window.sum(axis=1, keepdims=True)
    diff = cache["diff"]
    scales2 = cache["scales"][None] ** 2
    g_diff = -g_window_logits[:, :, None] * diff / scales2
    g_z += g_diff.sum(axis=1)
    params.accumulate("win_centers", -g_diff.sum(axis=0))
    params.accumulate(
        "win_log_scales", (g_window_logits[:, :, None] * cache["scaled"] ** 2).sum(axis=0)
    )
    if train_cfg.lambda_scale:
        params.accumulate("win_log_scales", 2.0 * train_cfg.lambda_scale * log_scales)

    # latent projection
    g_u = layer_norm_backward(cache["u"], g_z)
    params.accumulate("proj_w", xb.T @ g_u)
    params.accumulate("proj_b", g_u.sum(axis=0))

    return objective, nll


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    if batch_size <= 0:
        batch_size = n if n <= FULL_BATCH_LIMIT else MINI_BATCH_SIZE
    if batch_size >= n:
        yield np.arange(n)
        return
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train(
    params: ParamStore,
    x_train: np.ndarray,
    anchor_train: np.ndarray,
    y_train: np.ndarray,
    config: M.MoeConfig,
    train_cfg: TrainConfig,
    n_epochs: int,
    x_val: np.ndarray | None = None,
    anchor_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    adam: AdamState | None = None,
) -> tuple[TrainTrace, ParamStore | None]:
    """Run `n_epochs` of Adam on the regularized NLL, mutating `params`.

    If a validation fold is supplied, tracks per-epoch validation NLL and
    returns a copy of the parameters from the best epoch; otherwise the
    best-parameter return is None.
    """
    train_cfg.validate()
    adam = adam or AdamState(learning_rate=train_cfg.learning_rate)
    rng = np.random.default_rng(train_cfg.seed)
    trace = TrainTrace()
    best_params: ParamStore | None = None
    clamp = config.t_clamp
    has_val = x_val is not None

    for epoch in range(1, n_epochs + 1):
        epoch_obj = 0.0
        n_seen = 0
        for idx in _batches(x_train.shape[0], train_cfg.batch_size, rng):
            obj, _ = objective_and_grads(
                params, x_train[idx], anchor_train[idx], y_train[idx], config, train_cfg
            )
            adam_step(params, adam)
            # projected constraint on window log-scales
            np.clip(params["win_log_scales"], -clamp, clamp, out=params["win_log_scales"])
            epoch_obj += obj * idx.size
            n_seen += idx.size
        trace.train_objective.append(epoch_obj / n_seen)
        if has_val:
            val = mean_nll(params, x_val, anchor_val, y_val, config)
            trace.val_nll.append(val)
            if val < trace.best_val_nll:
                trace.best_val_nll = val
                trace.best_epoch = epoch
                best_params = params.copy()
    if has_val and best_params is None:
        raise DivergenceError("validation NLL never finite during training")
    return trace, best_params
