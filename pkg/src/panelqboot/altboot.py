"""Observation-weight bootstraps used as comparison methods.

MBB and ETBB reweight time periods through randomly placed (tapered) blocks;
WEB gives every observation of a unit the same Exp(1) weight.  Each
replicate refits the weighted FE-QR criterion sum_it pi*_it rho_tau(...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._engine import STREAM_ETBB, STREAM_MBB, STREAM_WEB, stream
from .errors import InvalidLength, ValidationError
from .paneldata import PanelDataset
from .pwb import BootstrapResult, collect_replicates
from .qrsolver import QuantileFit, SolverOptions, fit_arrays, fit_feqr

__all__ = ["TaperSpec", "block_weights", "web_weights", "run_alt_bootstrap", "RECTANGULAR", "TRIANGULAR"]


@dataclass(frozen=True)
class TaperSpec:
    """Within-block weight profile w on [0, 1]."""

    shape: str = "rectangular"

    def __post_init__(self):
        if self.shape not in ("rectangular", "triangular"):
            raise ValidationError(f"unknown taper {self.shape!r}")

    def w(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "rectangular":
            return np.where((t >= 0) & (t <= 1), 1.0, 0.0)
        return np.where(t <= 0.5, 2 * t, 2 * (1 - t)).clip(0.0, 1.0)

    def omega(self, l: int) -> np.ndarray:
        """omega_l(s) = w((s - 1/2) / l), s = 1..l."""
        s = np.arange(1, l + 1)
        return self.w((s - 0.5) / l)


RECTANGULAR = TaperSpec("rectangular")
TRIANGULAR = TaperSpec("triangular")


def _check_length(T: int, l: int):
    if not (isinstance(l, (int, np.integer)) and 1 <= l <= T):
        raise InvalidLength(f"block length must satisfy 1 <= l <= T (got {l}, T={T})")


def _pi_from_starts(T: int, l: int, omega: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """pi*_t = (1/(b |omega|_1)) sum_j omega(t - I_j + 1), starts 0-based, shape (..., b)."""
    b = starts.shape[-1]
    lead = starts.shape[:-1]
    out = np.zeros(lead + (T,))
    flat = out.reshape(-1, T)
    st = starts.reshape(-1, b)
    rows = np.arange(flat.shape[0])[:, None]
    for s in range(l):
        np.add.at(flat, (rows, st + s), omega[s])
    return out / (b * omega.sum())


def block_weights(T: int, l: int, taper: TaperSpec, rng: np.random.Generator) -> np.ndarray:
    """Weights from b = floor(T/l) blocks with starts uniform on {1..T-l+1}; sums to 1."""
    _check_length(T, l)
    b = T // l
    starts = rng.integers(0, T - l + 1, size=b)
    return _pi_from_starts(T, l, taper.omega(l), starts)


def _unit_block_weights(N: int, T: int, l: int, taper: TaperSpec, rng) -> np.ndarray:
    b = T // l
    starts = rng.integers(0, T - l + 1, size=(N, b))
    return _pi_from_starts(T, l, taper.omega(l), starts)


def web_weights(N: int, rng: np.random.Generator) -> np.ndarray:
    """One Exp(1) weight per unit."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    return rng.standard_exponential(N)


def run_alt_bootstrap(
    method: str,
    data: PanelDataset,
    tau: float,
    l: int | None,
    B: int,
    seed: int,
    opts: SolverOptions | None = None,
    *,
    fit: QuantileFit | None = None,
    threads: int | None = None,
) -> BootstrapResult:
    """B weighted refits under MBB, ETBB (triangular taper) or WEB weights.

    Block positions are drawn independently for every unit.  The block
    weights are multiplied by T so a weight of one means "observed once";
    the minimizer does not depend on that scale.
    """
    opts = opts or SolverOptions()
    if method in ("mbb", "etbb"):
        if l is None:
            raise InvalidLength(f"{method} needs a block length")
        _check_length(data.T, l)
        taper = RECTANGULAR if method == "mbb" else TRIANGULAR
        tag = STREAM_MBB if method == "mbb" else STREAM_ETBB

        def weights(r):
            return data.T * _unit_block_weights(data.N, data.T, l, taper, stream(seed, tag, r))

    elif method == "web":
        tag = STREAM_WEB

        def weights(r):
            w = web_weights(data.N, stream(seed, tag, r))
            return np.repeat(w[:, None], data.T, axis=1)

    else:
        raise ValidationError(f"unknown method {method!r}")
    if fit is None:
        fit = fit_feqr(data, tau, opts)

    def one(r):
        return fit_arrays(data.y, data.x, tau, opts.with_weights(weights(r))).beta

    return collect_replicates(method, one, B, seed, tag, fit, None, threads)
