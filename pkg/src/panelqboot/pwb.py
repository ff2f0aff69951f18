"""Partitioned wild bootstrap for fixed-effects quantile regression.

Each unit's time series is cut into cells of length ``l``; one weight per
(unit, cell) multiplies the absolute residuals of that cell:

    y*_it = x_it'beta_hat + alpha_hat_i + w_{i, cell(t)} * |u_hat_it|

and the FE-QR fit is recomputed on y*.  Weights come from a finite law with
P(w <= 0) = tau, no mass near zero, and E[1/w; w<0] = -E[1/w; w>0] = -1/2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._engine import STREAM_PWB, ordered_map, stream
from .errors import (
    DimensionMismatch,
    InvalidWeightLaw,
    NumericalError,
    TooManyFailures,
    ValidationError,
)
from .paneldata import PanelDataset, PartitionScheme, make_partition
from .qrsolver import QuantileFit, SolverOptions, fit_arrays, fit_feqr

__all__ = [
    "WeightLaw",
    "BootstrapResult",
    "two_point_law",
    "draw_weights",
    "bootstrap_sample",
    "run_pwb",
    "conditional_score_variance",
    "collect_replicates",
]

LAW_TOL = 1e-12
WARN_FAILURE_RATE = 0.01
ABORT_FAILURE_RATE = 0.1


@dataclass(frozen=True)
class WeightLaw:
    """Finite discrete weight distribution, validated on construction."""

    atoms: tuple
    tau: float

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        vals = np.array([a[0] for a in atoms])
        probs = np.array([a[1] for a in atoms])
        if len(atoms) == 0 or np.any(probs <= 0) or not np.all(np.isfinite(vals)):
            raise InvalidWeightLaw("atoms need finite values and positive probabilities")
        if abs(probs.sum() - 1.0) > LAW_TOL:
            raise InvalidWeightLaw("probabilities must sum to 1")
        if np.any(vals == 0.0):
            raise InvalidWeightLaw("no atom may sit at 0 (support must avoid a neighborhood of 0)")
        neg = vals < 0
        if abs(probs[neg].sum() - self.tau) > LAW_TOL:
            raise InvalidWeightLaw("P(w <= 0) must equal tau")
        lo = -np.sum(probs[neg] / vals[neg])
        hi = np.sum(probs[~neg] / vals[~neg])
        if abs(lo - 0.5) > LAW_TOL or abs(hi - 0.5) > LAW_TOL:
            raise InvalidWeightLaw("inverse-weight half integrals must both equal 1/2")

    @property
    def values(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms])


def two_point_law(tau: float) -> WeightLaw:
    """-2 tau with probability tau, 2 (1 - tau) with probability 1 - tau."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValidationError("tau must be in (0,1)")
    return WeightLaw(((-2.0 * tau, tau), (2.0 * (1.0 - tau), 1.0 - tau)), tau)


def draw_weights(law: WeightLaw, N: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """N x cells matrix of i.i.d. draws from ``law``."""
    cum = np.cumsum(law.probs)
    cum[-1] = 1.0
    u = rng.random((N, cells))
    return law.values[np.searchsorted(cum, u, side="right")]


def bootstrap_sample(fit: QuantileFit, data: PanelDataset, scheme: PartitionScheme, weights) -> PanelDataset:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (data.N, scheme.n_cells) or scheme.T != data.T:
        raise DimensionMismatch(
            f"weights must be {data.N} x {scheme.n_cells} for T={data.T}, l={scheme.l}"
        )
    w = weights[:, scheme.cell_of]
    ystar = fit.fitted(data) + w * np.abs(fit.residuals)
    return data.replace_y(ystar)


@dataclass(eq=False)
class BootstrapResult:
    """Replicate slope draws plus the bookkeeping needed to replay them.

    Row r of ``beta_star`` is the r-th successful replicate in replicate
    order; ``seeds[r]`` is the (master seed, stream, replicate) key of that
    row.
    """

    method: str
    tau: float
    B: int
    beta_star: np.ndarray
    base_fit: QuantileFit
    scheme: PartitionScheme | None
    master_seed: int
    seeds: list
    failures: int
    failed_replicates: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def collect_replicates(method, fn, B, seed, stream_tag, base_fit, scheme, threads) -> BootstrapResult:
    """Run ``fn(r) -> beta*`` for r = 0..B-1 and apply the failure policy."""
    if B < 2:
        raise ValidationError("B must be >= 2")

    def safe(r):
        try:
            return fn(r)
        except NumericalError:
            return None

    out = ordered_map(safe, list(range(B)), threads)
    failed = [r for r, b in enumerate(out) if b is None or not np.all(np.isfinite(b))]
    if len(failed) > ABORT_FAILURE_RATE * B:
        raise TooManyFailures(f"{len(failed)} of {B} replicates failed to converge")
    dropped = set(failed)
    ok = [r for r in range(B) if r not in dropped]
    p = base_fit.p
    beta_star = np.array([out[r] for r in ok]).reshape(len(ok), p)
    notes = []
    if len(failed) > WARN_FAILURE_RATE * B:
        msg = f"{len(failed)} of {B} replicates failed and were dropped"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return BootstrapResult(
        method=method,
        tau=base_fit.tau,
        B=B,
        beta_star=beta_star,
        base_fit=base_fit,
        scheme=scheme,
        master_seed=int(seed),
        seeds=[(int(seed), stream_tag, r) for r in ok],
        failures=len(failed),
        failed_replicates=failed,
        warnings=notes,
    )


def run_pwb(
    data: PanelDataset,
    tau: float,
    l: int,
    B: int,
    seed: int,
    opts: SolverOptions | None = None,
    *,
    law: WeightLaw | None = None,
    fit: QuantileFit | None = None,
    threads: int | None = None,
) -> BootstrapResult:
    """Partitioned wild bootstrap with cell length ``l`` and ``B`` replicates.

    Replicate r draws its weights from ``stream(seed, STREAM_PWB, r)`` so the
    result does not depend on scheduling or ``threads``.
    """
    opts = opts or SolverOptions()
    scheme = make_partition(data.T, l)
    law = law or two_point_law(tau)
    if abs(law.tau - tau) > LAW_TOL:
        raise InvalidWeightLaw("weight law targets a different tau")
    if fit is None:
        fit = fit_feqr(data, tau, opts)
    fitted = fit.fitted(data)
    absres = np.abs(fit.residuals)
    cell_of = scheme.cell_of

    def one(r):
        w = draw_weights(law, data.N, scheme.n_cells, stream(seed, STREAM_PWB, r))
        ystar = fitted + w[:, cell_of] * absres
        return fit_arrays(ystar, data.x, tau, opts).beta

    return collect_replicates("pwb", one, B, seed, STREAM_PWB, fit, scheme, threads)


def conditional_score_variance(
    fit: QuantileFit,
    scheme: PartitionScheme,
    centered_x,
    exclude_zero_residuals: bool = True,
) -> np.ndarray:
    """Exact bootstrap variance of the score (1/sqrt(T)) sum_t x_it psi(u*_it), averaged over units.

    Equals tau(1-tau)/(N T) sum_i sum_j S_ij S_ij', with S_ij the cell sum of
    centered regressors.  Observations with a zero residual have u* = 0 for
    every weight draw, so their score is constant; with
    ``exclude_zero_residuals`` they are left out of the cell sums.
    """
    xc = np.asarray(centered_x, dtype=float)
    n, t, p = xc.shape
    if t != scheme.T or fit.residuals.shape != (n, t):
        raise DimensionMismatch("centered_x, fit, and scheme disagree on N or T")
    if exclude_zero_residuals:
        xc = xc * (fit.residuals != 0)[:, :, None]
    sums = np.zeros((n, scheme.n_cells, p))
    np.add.at(sums, (slice(None), scheme.cell_of), xc)
    tau = fit.tau
    v = np.einsum("ijp,ijq->pq", sums, sums) * tau * (1 - tau) / (n * t)
    return 0.5 * (v + v.T)

