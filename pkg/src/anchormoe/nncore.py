"""Minimal differentiable primitives: named parameter store, LayerNorm,
softmax, log-sum-exp, Adam, and a finite-difference gradient checker.

Everything is float64 and pure numpy; forward passes are deterministic
functions of (inputs, parameters).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAYERNORM_EPS = 1e-5


class ParamStore:
    """Named float64 arrays with matching gradient buffers."""

    def __init__(self, arrays: dict[str, np.ndarray] | None = None):
        self.arrays: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        if arrays:
            for name, value in arrays.items():
                self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> None:
        arr = np.asarray(value, dtype=np.float64)
        self.arrays[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def names(self) -> list[str]:
        return list(self.arrays)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, arr in self.arrays.items():
            out.add(name, arr.copy())
            out.grads[name] = self.grads[name].copy()
        return out

    def assert_finite(self) -> None:
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter '{name}'")

    def to_json(self) -> str:
        return json.dumps({k: v.tolist() for k, v in self.arrays.items()})

    @classmethod
    def from_json(cls, text: str) -> "ParamStore":
        return cls({k: np.asarray(v, dtype=np.float64) for k, v in json.loads(text).items()})


def layer_norm(x: np.ndarray) -> np.ndarray:
    """Normalize the last axis to mean 0 / variance 1 (no learned affine)."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LAYERNORM_EPS)


def layer_norm_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of layer_norm w.r.t. its input, given upstream grad_out."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    z = (x - mu) * inv_std
    g_mean = grad_out.mean(axis=-1, keepdims=True)
    gz_mean = (grad_out * z).mean(axis=-1, keepdims=True)
    return inv_std * (grad_out - g_mean - z * gz_mean)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray, axis: int = -1) -> np.ndarray:
    """Pull grad_out back through a softmax whose output was `probs`."""
    inner = (grad_out * probs).sum(axis=axis, keepdims=True)
    return probs * (grad_out - inner)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_sum_exp(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """log sum exp with max-shift; -inf entries act as masked components."""
    terms = np.asarray(terms, dtype=np.float64)
    m = np.max(terms, axis=axis, keepdims=True)
    if np.any(np.isneginf(m)):
        raise ValueError("empty mixture: all terms are -inf")
    out = m.squeeze(axis) + np.log(np.exp(terms - m).sum(axis=axis))
    return out


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: ParamStore) -> None:
        for name, arr in params.arrays.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(arr)
                self.v[name] = np.zeros_like(arr)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update; zeros gradients afterwards."""
    state.ensure(params)
    state.step += 1
    t = state.step
    lr = state.learning_rate
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, arr in params.arrays.items():
        g = params.grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"NaN/inf gradient for parameter '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        arr -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    params.zero_grads()


def grad_check(
    f,
    params: ParamStore,
    h: float = 1e-4,
    max_coords_per_array: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    `f(params)` must populate params.grads and return the scalar loss.
    Returns per-parameter max relative error (|analytic - fd| / max(1, |fd|, |analytic|)).
    Failures are reported, never raised.
    """
    rng = rng or np.random.default_rng(0)
    params.zero_grads()
    f(params)
    analytic = {k: v.copy() for k, v in params.grads.items()}
    params.zero_grads()

    report: dict[str, float] = {}
    for name, arr in params.arrays.items():
        flat = arr.reshape(-1)
        n = flat.size
        if max_coords_per_array is not None and n > max_coords_per_array:
            idx = rng.choice(n, size=max_coords_per_array, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f(params)
            flat[i] = orig - h
            fm = f(params)
            flat[i] = orig
            params.zero_grads()
            fd = (fp - fm) / (2 * h)
            an = analytic[name].reshape(-1)[i]
            denom = max(1e-6, abs(fd), abs(an))
            worst = max(worst, abs(an - fd) / denom)
        report[name] = worst
    # restore analytic grads so callers can keep using them
    for name in params.grads:
        params.grads[name][...] = analytic[name]
    return report
