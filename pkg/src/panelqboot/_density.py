"""Bandwidth rules and kernel estimates of the residual density at zero."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .errors import ValidationError


def hall_sheather(n: int, tau: float, alpha: float = 0.05) -> float:
    """Hall-Sheather bandwidth on the probability scale."""
    z = stats.norm.ppf(1 - alpha / 2)
    x0 = stats.norm.ppf(tau)
    f0 = stats.norm.pdf(x0)
    return n ** (-1 / 3) * z ** (2 / 3) * ((1.5 * f0**2) / (2 * x0**2 + 1)) ** (1 / 3)


def bofinger(n: int, tau: float) -> float:
    x0 = stats.norm.ppf(tau)
    f0 = stats.norm.pdf(x0)
    return n ** (-1 / 5) * ((4.5 * f0**4) / (2 * x0**2 + 1) ** 2) ** (1 / 5)


def residual_bandwidth(resid, tau: float, rule: str = "hall-sheather") -> float:
    """Convert a probability-scale bandwidth to residual units.

    h = (Phi^-1(tau + hp) - Phi^-1(tau - hp)) * min(sd, IQR / 1.34), pooled
    over all residuals.
    """
    r = np.asarray(resid, dtype=float).ravel()
    n = r.size
    if rule == "hall-sheather":
        hp = hall_sheather(n, tau)
    elif rule == "bofinger":
        hp = bofinger(n, tau)
    else:
        raise ValidationError(f"unknown bandwidth rule {rule!r}")
    hp = min(hp, tau - 1e-6, 1 - tau - 1e-6)
    q75, q25 = np.percentile(r, [75, 25])
    spread = min(np.std(r, ddof=1), (q75 - q25) / 1.34)
    if not spread > 0:
        spread = np.std(r, ddof=1)
    return float((stats.norm.ppf(tau + hp) - stats.norm.ppf(tau - hp)) * spread)


def unit_density_moments(resid, x, h: float):
    """Per-unit kernel moments at zero: phi_i, g_i (p), J_i (p x p).

    phi_i = (1/(T h)) sum_t K(u_it / h), with g_i and J_i carrying x and xx'.
    """
    resid = np.asarray(resid, dtype=float)
    k = stats.norm.pdf(resid / h) / h
    t = resid.shape[1]
    phi = k.sum(axis=1) / t
    g = np.einsum("it,itp->ip", k, x) / t
    J = np.einsum("it,itp,itq->ipq", k, x, x) / t
    return phi, g, J
