"""Confidence intervals, covariance estimates, and Wald tests for the FE-QR slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._density import residual_bandwidth, unit_density_moments
from .errors import (
    DegenerateDensity,
    DimensionMismatch,
    NegativeVariance,
    SingularD,
    SingularRestriction,
    TooFewDraws,
    ValidationError,
)
from .paneldata import PanelDataset
from .qrsolver import QuantileFit

__all__ = [
    "ConfidenceInterval",
    "CovarianceEstimate",
    "percentile_ci",
    "boot_covariance",
    "se_ci",
    "wald_test",
    "powell_variance",
]

MIN_PERCENTILE_DRAWS = 20
PSD_TOL = 1e-10


def _check_level(level: float) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ValidationError("level must be in (0,1)")
    return level


@dataclass(frozen=True)
class ConfidenceInterval:
    coordinate: int
    lower: float
    upper: float
    level: float
    method: str

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValidationError("interval lower end exceeds upper end")

    def covers(self, value: float) -> bool:
        return bool(self.lower <= value <= self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "coordinate": self.coordinate,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "method": self.method,
        }


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Sampling covariance of beta_hat (already divided by NT)."""

    sigma: np.ndarray
    source: str

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if s.shape[0] != s.shape[1]:
            raise DimensionMismatch("covariance must be square")
        s = 0.5 * (s + s.T)
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sigma), 0.0, None))


def _draws(draws) -> np.ndarray:
    d = np.asarray(draws, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    return d


def percentile_ci(draws, level: float, coordinate: int = 0) -> ConfidenceInterval:
    """[ceil(B lam/2)-th, ceil(B (1 - lam/2))-th] order statistics, lam = 1 - level."""
    level = _check_level(level)
    d = _draws(draws)
    B = d.shape[0]
    if B < MIN_PERCENTILE_DRAWS:
        raise TooFewDraws(f"percentile interval needs at least {MIN_PERCENTILE_DRAWS} draws (got {B})")
    lam = 1.0 - level
    # round before ceil so that e.g. 100 * 0.05 does not become 5.000000000000001
    lo_k = max(1, math.ceil(round(B * lam / 2, 9)))
    hi_k = min(B, math.ceil(round(B * (1 - lam / 2), 9)))
    col = np.sort(d[:, coordinate])
    return ConfidenceInterval(coordinate, float(col[lo_k - 1]), float(col[hi_k - 1]), level, "percentile")


def boot_covariance(draws, beta_hat) -> CovarianceEstimate:
    """(1/B) sum_b (beta*_b - beta_hat)(beta*_b - beta_hat)'."""
    d = _draws(draws)
    B = d.shape[0]
    if B < 2:
        raise TooFewDraws("bootstrap covariance needs at least 2 draws")
    c = d - np.asarray(beta_hat, dtype=float).reshape(1, -1)
    return CovarianceEstimate(c.T @ c / B, "bootstrap")


def se_ci(beta_hat, sigma: CovarianceEstimate, level: float, coordinate: int = 0) -> ConfidenceInterval:
    """beta_hat_j -/+ z_{1 - lam/2} sqrt(Sigma_jj)."""
    level = _check_level(level)
    var = float(sigma.sigma[coordinate, coordinate])
    if var < -PSD_TOL:
        raise NegativeVariance(f"variance of coordinate {coordinate} is negative ({var:.3g})")
    z = stats.norm.ppf(1 - (1 - level) / 2)
    half = z * math.sqrt(max(var, 0.0))
    b = float(np.asarray(beta_hat, dtype=float).reshape(-1)[coordinate])
    return ConfidenceInterval(coordinate, b - half, b + half, level, "se_normal")


def wald_test(R, r, beta_hat, sigma: CovarianceEstimate) -> tuple[float, float]:
    """W = (R b - r)'(R S R')^-1 (R b - r) against chi-square(q)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.asarray(r, dtype=float).reshape(-1)
    b = np.asarray(beta_hat, dtype=float).reshape(-1)
    if R.shape[1] != b.shape[0] or R.shape[0] != r.shape[0]:
        raise DimensionMismatch(f"R is {R.shape}, r has {r.shape[0]} rows, beta has {b.shape[0]}")
    q = R.shape[0]
    if np.linalg.matrix_rank(R) < q:
        raise SingularRestriction("R must have full row rank")
    M = R @ sigma.sigma @ R.T
    if np.linalg.cond(M) > 1e14:
        raise SingularRestriction("R Sigma R' is not invertible")
    d = R @ b - r
    W = float(d @ np.linalg.solve(M, d))
    return W, float(stats.chi2.sf(W, q))


def powell_variance(
    fit: QuantileFit,
    data: PanelDataset,
    bandwidth: float | None = None,
    rule: str = "hall-sheather",
) -> CovarianceEstimate:
    """Kernel plug-in sandwich D^-1 V0 D^-1 / (NT), valid under independence over t.

    D = (1/N) sum_i (J_i - g_i g_i' / phi_i) and V0 = tau(1-tau)/(NT) sum x~ x~',
    x~_it = x_it - g_i / phi_i, with Gaussian-kernel moments at zero.
    """
    x = data.x
    n, t, p = x.shape
    if fit.residuals.shape != (n, t) or fit.p != p:
        raise DimensionMismatch("fit and data disagree on shape")
    h = bandwidth if bandwidth is not None else residual_bandwidth(fit.residuals, fit.tau, rule)
    if not h > 0:
        raise DegenerateDensity("density bandwidth is zero")
    phi, g, J = unit_density_moments(fit.residuals, x, h)
    if np.any(phi <= 1e-12):
        i = int(np.argmin(phi))
        raise DegenerateDensity(f"unit {data.unit_ids[i]!r}: residual density estimate is zero")
    ratio = g / phi[:, None]
    D = (J - np.einsum("ip,iq->ipq", g, ratio)).mean(axis=0)
    D = 0.5 * (D + D.T)
    xt = x - ratio[:, None, :]
    tau = fit.tau
    V0 = tau * (1 - tau) * np.einsum("itp,itq->pq", xt, xt) / (n * t)
    if np.linalg.cond(D) > 1e12:
        raise SingularD("density-weighted design matrix D is singular")
    Dinv = np.linalg.inv(D)
    return CovarianceEstimate(Dinv @ V0 @ Dinv / (n * t), "powell_iid")
