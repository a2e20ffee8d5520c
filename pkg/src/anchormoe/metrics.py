"""Evaluation metrics: RMSE, mean NLL, and CRPS for Gaussian mixtures.

CRPS uses the closed form for finite Gaussian mixtures:
  CRPS(F, y) = sum_i w_i A(y - m_i, s_i^2)
               - 1/2 sum_i sum_j w_i w_j A(m_i - m_j, s_i^2 + s_j^2)
with A(m, s^2) = m (2 Phi(m/s) - 1) + 2 s phi(m/s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from .model import MixtureDensity

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    return float(np.sqrt(((y_true - y_pred) ** 2).mean()))


def mean_nll(mixture: MixtureDensity, y: np.ndarray) -> float:
    return float(-mixture.logpdf(np.asarray(y, dtype=np.float64)).mean())


def _phi(x: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * x**2)


def _crps_kernel(m: np.ndarray, var: np.ndarray) -> np.ndarray:
    """A(m, s^2) = E|X - X'| building block for Gaussian CRPS terms."""
    s = np.sqrt(var)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(s > 0, m / np.where(s > 0, s, 1.0), 0.0)
    out = m * (2.0 * ndtr(r) - 1.0) + 2.0 * s * _phi(r)
    return np.where(s > 0, out, np.abs(m))


def crps_mixture(mixture: MixtureDensity, y: np.ndarray) -> np.ndarray:
    """Per-row closed-form CRPS of a Gaussian mixture at observations y."""
    y = np.asarray(y, dtype=np.float64)
    w, m, s = mixture.weights, mixture.means, mixture.sigmas
    first = (w * _crps_kernel(y[:, None] - m, s**2)).sum(axis=1)
    cross = _crps_kernel(
        m[:, :, None] - m[:, None, :], s[:, :, None] ** 2 + s[:, None, :] ** 2
    )
    second = 0.5 * (w[:, :, None] * w[:, None, :] * cross).sum(axis=(1, 2))
    return first - second


def mean_crps(mixture: MixtureDensity, y: np.ndarray) -> float:
    return float(crps_mixture(mixture, y).mean())


def crps_quadrature(mixture: MixtureDensity, y: np.ndarray) -> np.ndarray:
    """CRPS by numerical integration of (F(t) - 1{t >= y})^2; cross-check only."""
    y = np.asarray(y, dtype=np.float64)
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        row = MixtureDensity(
            mixture.weights[i : i + 1], mixture.means[i : i + 1], mixture.sigmas[i : i + 1]
        )
        lo = float((row.means - 12.0 * row.sigmas).min())
        hi = float((row.means + 12.0 * row.sigmas).max())
        lo, hi = min(lo, y[i] - 1.0), max(hi, y[i] + 1.0)

        def integrand(t, yi=y[i], r=row):
            f = r.cdf(np.array([t]))[0]
            return (f - (t >= yi)) ** 2

        left, _ = quad(integrand, lo, y[i], limit=200)
        right, _ = quad(integrand, y[i], hi, limit=200)
        out[i] = left + right
    return out


def crps_bound(r_f: float, r_y: float, sigma_max: float) -> float:
    """Uniform CRPS bound B = R_f + R_y + sqrt(2/pi) * sigma_max, valid when
    all mixture means lie in [-R_f, R_f], y in [-R_y, R_y], and component
    sigmas are at most sigma_max.
    """
    return float(r_f + r_y + np.sqrt(2.0 / np.pi) * sigma_max)


def crps_bound_check(mixture: MixtureDensity, y: np.ndarray, bounds: dict) -> bool:
    """True iff closed-form CRPS <= R_f + R_y + sqrt(2/pi)*sigma_max everywhere."""
    b = crps_bound(bounds["R_f"], bounds["R_y"], bounds["sigma_max"])
    return bool(np.all(crps_mixture(mixture, y) <= b))


@dataclass(frozen=True)
class RunReport:
    seed: int
    rmse: float
    nll: float
    crps: float
    anchor_stages: int
    best_epoch: int

    def to_row(self) -> list:
        return [self.seed, self.rmse, self.nll, self.crps, self.anchor_stages, self.best_epoch]


@dataclass(frozen=True)
class AggregateReport:
    n_runs: int
    rmse_mean: float
    rmse_stderr: float
    nll_mean: float
    nll_stderr: float
    crps_mean: float
    crps_stderr: float


def aggregate(reports: list) -> AggregateReport:
    """Mean and standard error (sample std / sqrt(n)) over per-run reports."""
    if not reports:
        raise ValueError("no runs to aggregate")
    n = len(reports)

    def stats(values):
        arr = np.array(values, dtype=np.float64)
        se = float(arr.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return float(arr.mean()), se

    rm, rs = stats([r.rmse for r in reports])
    nm, ns = stats([r.nll for r in reports])
    cm, cs = stats([r.crps for r in reports])
    return AggregateReport(n, rm, rs, nm, ns, cm, cs)


RUN_CSV_HEADER = ["seed", "rmse", "nll", "crps", "anchor_stages", "best_epoch"]


def runs_to_csv(reports: list) -> str:
    lines = [",".join(RUN_CSV_HEADER)]
    for r in reports:
        lines.append(
            f"{r.seed},{r.rmse:.12g},{r.nll:.12g},{r.crps:.12g},{r.anchor_stages},{r.best_epoch}"
        )
    return "\n".join(lines) + "\n"


def aggregate_to_csv(agg: AggregateReport) -> str:
    header = "n_runs,rmse_mean,rmse_stderr,nll_mean,nll_stderr,crps_mean,crps_stderr"
    row = (
        f"{agg.n_runs},{agg.rmse_mean:.12g},{agg.rmse_stderr:.12g},"
        f"{agg.nll_mean:.12g},{agg.nll_stderr:.12g},"
        f"{agg.crps_mean:.12g},{agg.crps_stderr:.12g}"
    )
    return header + "\n" + row + "\n"
