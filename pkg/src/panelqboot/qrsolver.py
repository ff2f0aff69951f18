"""Check loss, quantile score, and the fixed-effects quantile regression fit.

The production fit is :func:`fit_feqr` (interior point, see ``_ipm``).
:func:`brute_force_fit` enumerates basic solutions and is only meant as an
exact reference on tiny panels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _ipm
from .errors import (
    AllWeightsZeroForUnit,
    NoConvergence,
    SingularDesign,
    TooLarge,
    ValidationError,
)
from .paneldata import PanelDataset

__all__ = [
    "check_loss",
    "score_psi",
    "SolverOptions",
    "QuantileFit",
    "fit_feqr",
    "fit_arrays",
    "brute_force_fit",
    "total_loss",
]


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValidationError("tau must be in (0,1)")
    return tau


def check_loss(u, tau: float):
    """rho_tau(u) = u * (tau - 1{u < 0}); works elementwise on arrays."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return float(out) if out.ndim == 0 else out


def score_psi(u, tau: float):
    """psi_tau(u) = tau - 1{u < 0}, so psi_tau(0) = tau."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = tau - (u < 0).astype(float)
    return float(out) if out.ndim == 0 else out


def total_loss(resid, tau: float, weights=None) -> float:
    loss = check_loss(np.asarray(resid, dtype=float), tau)
    if weights is not None:
        loss = loss * weights
    return float(np.sum(loss))


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 50
    obs_weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.obs_weights is not None:
            w = np.asarray(self.obs_weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValidationError("obs_weights must be finite and nonnegative")

    def with_weights(self, weights) -> "SolverOptions":
        return SolverOptions(self.tol, self.max_iter, weights)


@dataclass(frozen=True, eq=False)
class QuantileFit:
    """Result of a fixed-effects quantile regression.

    ``residuals`` are y - x'beta - alpha_i for every observation, including
    any that carried zero weight.  Residuals of the interpolated (basic)
    observations are exactly zero when the vertex polish succeeded.
    """

    tau: float
    beta: np.ndarray
    alpha: np.ndarray
    residuals: np.ndarray
    objective: float
    iterations: int
    duality_gap: float
    vertex: bool = False
    obs_weights: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.residuals.shape[0]

    @property
    def T(self) -> int:
        return self.residuals.shape[1]

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def fitted(self, data: PanelDataset) -> np.ndarray:
        return data.x @ self.beta + self.alpha[:, None]

    def psi(self) -> np.ndarray:
        return score_psi(self.residuals, self.tau)

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "beta": self.beta.tolist(),
            "alpha": self.alpha.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "duality_gap": self.duality_gap,
            "vertex": self.vertex,
        }


def fit_feqr(data: PanelDataset, tau: float, opts: SolverOptions | None = None) -> QuantileFit:
    """Minimize sum_it w_it rho_tau(y_it - x_it'beta - alpha_i)."""
    opts = opts or SolverOptions()
    return fit_arrays(data.y, data.x, tau, opts)


def fit_arrays(y, x, tau: float, opts: SolverOptions | None = None) -> QuantileFit:
    """Array-level fit; unlike :func:`fit_feqr` this accepts p = 0 (effects only)."""
    opts = opts or SolverOptions()
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n, t = y.shape
    p = x.shape[2]
    yf = y.reshape(-1)
    xf = x.reshape(n * t, p)
    unit = np.repeat(np.arange(n), t)

    if opts.obs_weights is None:
        wts = None
        keep = slice(None)
        e = np.ones(n * t)
    else:
        wts = np.asarray(opts.obs_weights, dtype=np.float64).reshape(-1)
        if wts.shape[0] != n * t:
            raise ValidationError("obs_weights must have one entry per observation")
        mask = wts > 0
        counts = np.bincount(unit[mask], minlength=n)
        if np.any(counts == 0):
            i = int(np.nonzero(counts == 0)[0][0])
            raise AllWeightsZeroForUnit(f"unit index {i} has no positive weight")
        keep = np.nonzero(mask)[0]
        e = wts[keep]
    uk = unit[keep]
    starts = np.concatenate(([0], np.cumsum(np.bincount(uk, minlength=n)))).astype(np.int64)
    Xk = np.ascontiguousarray(xf[keep] * e[:, None])
    yk = np.ascontiguousarray(yf[keep] * e)
    e = np.ascontiguousarray(e, dtype=np.float64)

    theta, iters, gap, status = _ipm.frisch_newton(Xk, e, starts, yk, tau, opts.tol, opts.max_iter)
    if status == _ipm.STATUS_SINGULAR:
        raise SingularDesign("design [x | unit indicators] is rank deficient")
    if status == _ipm.STATUS_MAXITER:
        raise NoConvergence(f"duality gap {gap:.3g} > tol after {iters} iterations")
    beta, alpha = theta[:p].copy(), theta[p:].copy()
    resid = y - x @ beta - alpha[:, None]
    obj = total_loss(resid.reshape(-1)[keep], tau, None if wts is None else e)

    vertex = False
    polished = _polish(yf, xf, unit, keep, e if wts is not None else None, resid.reshape(-1), n, p, tau)
    if polished is not None:
        vbeta, valpha, vres, vobj, basis = polished
        if vobj <= obj + 1e-12 * (1.0 + abs(obj)):
            beta, alpha, obj, vertex = vbeta, valpha, vobj, True
            vres = vres.copy()
            vres[basis] = 0.0
            resid = vres.reshape(n, t)
    if not vertex:
        scale = 1.0 + float(np.max(np.abs(y)))
        resid = np.where(np.abs(resid) <= 1e-10 * scale, 0.0, resid)

    w_full = None if wts is None else wts.reshape(n, t).copy()
    return QuantileFit(
        tau=tau,
        beta=beta,
        alpha=alpha,
        residuals=resid,
        objective=obj,
        iterations=int(iters),
        duality_gap=float(gap),
        vertex=vertex,
        obs_weights=w_full,
    )


def _polish(yf, xf, unit, keep, e, resid, n, p, tau):
    """Snap an interior solution to the nearby vertex.

    Picks each unit's smallest |residual| row plus the p smallest remaining
    rows, and solves the interpolation system exactly.
    """
    m = yf.shape[0]
    idx = np.arange(m)[keep]
    r = np.full(m, np.inf)
    r[idx] = np.abs(resid[idx])
    r = r.reshape(n, -1)
    t = r.shape[1]
    cols = np.argmin(r, axis=1)
    chosen = np.arange(n) * t + cols
    r = r.reshape(-1)
    r[chosen] = np.inf
    if p:
        rest = np.argpartition(r, p - 1)[:p]
        if not np.all(np.isfinite(r[rest])):
            return None
    else:
        rest = np.empty(0, dtype=np.int64)
    basis = np.sort(np.concatenate((chosen, rest)))
    Z = np.zeros((n + p, p + n))
    Z[:, :p] = xf[basis]
    Z[np.arange(n + p), p + unit[basis]] = 1.0
    try:
        theta = np.linalg.solve(Z, yf[basis])
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(theta)) or np.linalg.cond(Z) > 1e12:
        return None
    beta, alpha = theta[:p], theta[p:]
    res = yf - xf @ beta - alpha[unit]
    obj = total_loss(res[idx], tau, e)
    return beta, alpha, res, obj, basis


def brute_force_fit(data, tau: float, max_combinations: int = 5_000_000) -> QuantileFit:
    """Exact minimizer by enumerating every basic solution.

    Accepts a :class:`PanelDataset` or a ``(y, x)`` tuple (the latter allows
    p = 0).  Ties are broken toward the lexicographically smallest
    ``(beta, alpha)``.
    """
    tau = _check_tau(tau)
    if isinstance(data, PanelDataset):
        y, x = data.y, data.x
    else:
        y, x = (np.asarray(a, dtype=float) for a in data)
    n, t = y.shape
    p = x.shape[2]
    k = p + n
    m = n * t
    if k > 12 or m > 40:
        raise TooLarge(f"brute force needs p+N <= 12 and N*T <= 40 (got {k}, {m})")
    if math.comb(m, k) > max_combinations:
        raise TooLarge(f"{math.comb(m, k)} candidate bases exceed the enumeration cap")
    yf = y.reshape(-1)
    unit = np.repeat(np.arange(n), t)
    Z = np.zeros((m, k))
    Z[:, :p] = x.reshape(m, p)
    Z[np.arange(m), p + unit] = 1.0

    best_obj = np.inf
    cands = []
    combos = itertools.combinations(range(m), k)
    while True:
        chunk = np.array(list(itertools.islice(combos, 20000)), dtype=np.int64)
        if chunk.size == 0:
            break
        Zb = Z[chunk]
        sv = np.linalg.svd(Zb, compute_uv=False)
        ok = sv[:, -1] > 1e-10 * sv[:, 0]
        if not np.any(ok):
            continue
        thetas = np.linalg.solve(Zb[ok], yf[chunk[ok]][..., None])[..., 0]
        res = yf[None, :] - thetas @ Z.T
        objs = np.sum(res * (tau - (res < 0)), axis=1)
        lo = objs.min()
        if lo < best_obj + 1e-10 * (1 + abs(best_obj)):
            best_obj = min(best_obj, lo)
            sel = objs <= best_obj + 1e-10 * (1 + abs(best_obj))
            cands = [c for c in cands if c[0] <= best_obj + 1e-10 * (1 + abs(best_obj))]
            cands.extend((o, th) for o, th in zip(objs[sel], thetas[sel]))
    if not cands:
        raise SingularDesign("no nonsingular basis exists")
    thetas = np.array([c[1] for c in cands])
    # np.lexsort sorts by the last key first
    pick = np.lexsort(thetas.T[::-1])[0]
    theta = thetas[pick]
    beta, alpha = theta[:p], theta[p:]
    res = y - x @ beta - alpha[:, None]
    res = np.where(np.abs(res) <= 1e-12 * (1 + np.max(np.abs(y))), 0.0, res)
    return QuantileFit(
        tau=tau,
        beta=beta,
        alpha=alpha,
        residuals=res,
        objective=total_loss(res, tau),
        iterations=0,
        duality_gap=0.0,
        vertex=True,
    )
