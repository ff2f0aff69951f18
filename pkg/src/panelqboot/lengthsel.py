"""Data-driven choice of the PWB cell length.

The cell length is chosen so that the within-cell covariance the bootstrap
reproduces, tau(1-tau) sum_{k<l} (l-k)/l E[x_t x_{t+k}'], matches a kernel
estimate of the serial part of the score's long-run variance,
sum_k K(k) E[x_t psi_t x_{t+k}' psi_{t+k}].  Matrices are reduced to scalars
by their trace.  Nothing here is random.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._density import residual_bandwidth, unit_density_moments
from .errors import DegenerateDensity, InvalidLength, MissingFit, ValidationError
from .paneldata import PanelDataset
from .qrsolver import QuantileFit

__all__ = [
    "KernelSpec",
    "SelectionDiagnostics",
    "CONSERVATIVE_WARNING",
    "centered_regressors",
    "select_length_closed_form",
    "select_length_per_unit",
    "dependence_estimate",
]

DEFAULT_MAX_LENGTH = 25

CONSERVATIVE_WARNING = (
    "negative autocovariances dominate the variance expression: the bootstrap "
    "variance will converge to the variance obtained under i.i.d. conditions, "
    "overestimating the asymptotic variance, so inference is conservative "
    "(cell length set to 1)"
)


@dataclass(frozen=True)
class KernelSpec:
    """Lag-window kernel; ``weight(k)`` takes the lag in periods."""

    shape: str = "triangular"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.shape not in ("triangular", "rectangular"):
            raise ValidationError(f"unknown kernel shape {self.shape!r}")
        if not self.bandwidth > 0:
            raise ValidationError("kernel bandwidth must be positive")

    @classmethod
    def default(cls, T: int) -> "KernelSpec":
        return cls("triangular", 2.0 * math.ceil(T ** (1 / 3)))

    def weight(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        if self.shape == "triangular":
            out = np.maximum(0.0, 1.0 - k / self.bandwidth)
        else:
            out = (k <= self.bandwidth).astype(float)
        return float(out) if out.ndim == 0 else out

    def max_lag(self, T: int) -> int:
        """Largest lag below T with nonzero weight."""
        h = self.bandwidth
        if self.shape == "triangular":
            top = math.ceil(h) - 1
        else:
            top = math.floor(h)
        return int(max(0, min(T - 1, top)))


@dataclass
class SelectionDiagnostics:
    l_hat: int
    per_unit: np.ndarray
    kernel: str
    bandwidth: float
    L: int
    rhs_estimate: np.ndarray
    rhs_trace: float
    negative_dependence: bool
    lhs_curves: np.ndarray = field(repr=False)
    rhs_per_unit: np.ndarray = field(repr=False)
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "l_hat": self.l_hat,
            "per_unit": [int(v) for v in self.per_unit],
            "kernel": self.kernel,
            "bandwidth": self.bandwidth,
            "L": self.L,
            "rhs_estimate": np.atleast_2d(self.rhs_estimate).tolist(),
            "rhs_trace": self.rhs_trace,
            "negative_dependence": self.negative_dependence,
            "lhs_curve_mean": self.lhs_curves.mean(axis=0).tolist(),
            "rhs_mean": float(self.rhs_per_unit.mean()),
            "warning": self.warning,
        }


def centered_regressors(
    data: PanelDataset,
    mode: str = "demean",
    fit: QuantileFit | None = None,
    bandwidth: float | None = None,
) -> np.ndarray:
    """x_it minus its unit mean, or minus the density-weighted mean g_i / phi_i."""
    x = data.x
    if mode == "demean":
        return x - x.mean(axis=1, keepdims=True)
    if mode != "density_weighted":
        raise ValidationError(f"unknown centering mode {mode!r}")
    if fit is None:
        raise MissingFit("density_weighted centering needs a fitted model")
    h = bandwidth if bandwidth is not None else residual_bandwidth(fit.residuals, fit.tau)
    phi, g, _ = unit_density_moments(fit.residuals, x, h)
    if np.any(phi <= 1e-12):
        i = int(np.argmin(phi))
        raise DegenerateDensity(f"unit {data.unit_ids[i]!r}: residual density estimate is zero")
    return x - (g / phi[:, None])[:, None, :]


def _lag_products(v: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """Per-unit (1/T) sum_k K(k) sum_t v_t v_{t+k}', shape (N, p, p)."""
    n, t, p = v.shape
    out = np.zeros((n, p, p))
    for k in range(1, kernel.max_lag(t) + 1):
        wk = kernel.weight(k)
        if wk == 0.0:
            continue
        out += wk * np.einsum("itp,itq->ipq", v[:, :-k], v[:, k:])
    return out / t


def _score_terms(fit: QuantileFit, x_checked) -> np.ndarray:
    xc = np.asarray(x_checked, dtype=float)
    if xc.ndim == 2:
        xc = xc[:, :, None]
    if xc.shape[:2] != fit.residuals.shape:
        raise ValidationError("x_checked must be N x T x p matching the fit")
    return xc * fit.psi()[:, :, None]


def dependence_estimate(fit: QuantileFit, x_checked, kernel: KernelSpec | None = None) -> np.ndarray:
    """Kernel estimate of the serial part of the score variance, (2/N) sum_i RHS_i."""
    kernel = kernel or KernelSpec.default(fit.T)
    m = _lag_products(_score_terms(fit, x_checked), kernel).mean(axis=0)
    return m + m.T


def select_length_closed_form(fit: QuantileFit, kernel: KernelSpec | None = None) -> int:
    """1 + ceil(2/(tau(1-tau)) (1/NT) sum_i sum_k K(k) sum_t psi_it psi_i,t+k)_+, capped at T."""
    kernel = kernel or KernelSpec.default(fit.T)
    psi = fit.psi()
    n, t = psi.shape
    total = 0.0
    for k in range(1, kernel.max_lag(t) + 1):
        total += kernel.weight(k) * float(np.sum(psi[:, :-k] * psi[:, k:]))
    tau = fit.tau
    a = 2.0 / (tau * (1 - tau)) * total / (n * t)
    return int(min(t, 1 + max(math.ceil(a), 0)))


def _lhs_traces(xc: np.ndarray, tau: float, L: int) -> np.ndarray:
    """trace LHS_i(l) for l = 1..L, shape (N, L).

    Within a cell the lagged cross products sum to (|S_j|^2 - sum_s |x_s|^2)/2,
    S_j being the cell sum; only full cells enter the average.
    """
    n, t, p = xc.shape
    out = np.zeros((n, L))
    sq = np.einsum("itp,itp->it", xc, xc)
    for l in range(2, L + 1):
        b = t // l
        cells = xc[:, : b * l].reshape(n, b, l, p)
        s = cells.sum(axis=2)
        cross = 0.5 * (np.einsum("ijp,ijp->i", s, s) - sq[:, : b * l].sum(axis=1))
        out[:, l - 1] = tau * (1 - tau) * cross / (l * b)
    return out


def select_length_per_unit(
    fit: QuantileFit,
    x_checked,
    kernel: KernelSpec | None = None,
    L: int | None = None,
) -> SelectionDiagnostics:
    """Match bootstrap and kernel dependence unit by unit, then average the lengths."""
    t = fit.T
    kernel = kernel or KernelSpec.default(t)
    if L is None:
        L = min(DEFAULT_MAX_LENGTH, t)
    if not 1 <= L <= t:
        raise InvalidLength(f"search cap L must satisfy 1 <= L <= T (got {L}, T={t})")
    xc = np.asarray(x_checked, dtype=float)
    if xc.ndim == 2:
        xc = xc[:, :, None]
    rhs = _lag_products(_score_terms(fit, xc), kernel)
    rhs_tr = np.trace(rhs, axis1=1, axis2=2)
    lhs = _lhs_traces(xc, fit.tau, L)
    per_unit = 1 + np.argmin(np.abs(lhs - rhs_tr[:, None]), axis=1)
    rhs_mean = rhs.mean(axis=0)
    rhs_mean = 0.5 * (rhs_mean + rhs_mean.T)
    negative = bool(rhs_tr.sum() < 0)
    note = None
    if negative:
        l_hat = 1
        note = CONSERVATIVE_WARNING
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    else:
        l_hat = int(min(L, max(1, math.floor(per_unit.mean() + 0.5))))
    return SelectionDiagnostics(
        l_hat=l_hat,
        per_unit=per_unit,
        kernel=kernel.shape,
        bandwidth=float(kernel.bandwidth),
        L=int(L),
        rhs_estimate=rhs_mean,
        rhs_trace=float(np.trace(rhs_mean)),
        negative_dependence=negative,
        lhs_curves=lhs,
        rhs_per_unit=rhs_tr,
        warning=note,
    )
