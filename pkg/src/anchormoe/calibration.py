"""Post-hoc affine calibration of predicted means.

Fits (a, b) minimizing ||a*mu + b - y||^2 in closed form on a held-out
calibration fold, in original target units. Degenerate folds (constant
predictions) fall back to a=1, b = mean residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AffineCalibration:
    a: float
    b: float

    def apply(self, mu: np.ndarray) -> np.ndarray:
        return self.a * np.asarray(mu, dtype=np.float64) + self.b


def fit_calibration(mu: np.ndarray, y: np.ndarray) -> AffineCalibration:
    """Ordinary least squares of y on mu: a = cov(mu,y)/var(mu), b = ybar - a*mubar."""
    mu = np.asarray(mu, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mu.shape != y.shape or mu.ndim != 1 or mu.size == 0:
        raise ValueError("calibration needs matching non-empty 1-D arrays")
    mu_bar = mu.mean()
    var = ((mu - mu_bar) ** 2).mean()
    if var <= 0.0 or not np.isfinite(var):
        return AffineCalibration(1.0, float((y - mu).mean()))
    cov = ((mu - mu_bar) * (y - y.mean())).mean()
    a = cov / var
    b = float(y.mean() - a * mu_bar)
    return AffineCalibration(float(a), b)
