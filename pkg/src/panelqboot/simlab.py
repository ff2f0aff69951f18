"""Monte Carlo designs with AR(2) errors and coverage experiments.

The design is y_it = alpha_i + x_it + (1 + zeta x_it) u_it with
x_it = 0.5 alpha_i + z_i + eps_it, z_i ~ chi2(3), and u, eps independent
AR(2) processes.  The tau-th conditional quantile slope is
beta_0 = 1 + zeta F^-1(tau), F the stationary law of u.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from ._engine import STREAM_SIM, ordered_map, stream
from .altboot import run_alt_bootstrap
from .errors import NonStationary, NumericalError, ValidationError
from .inference import boot_covariance, percentile_ci, powell_variance, se_ci
from .lengthsel import KernelSpec, centered_regressors, select_length_per_unit
from .paneldata import PanelDataset
from .pwb import run_pwb
from .qrsolver import SolverOptions, fit_feqr

__all__ = [
    "SimConfig",
    "CoverageReport",
    "sigma_u2",
    "gen_ar2",
    "gen_panel",
    "stationary_quantile_oracle",
    "true_beta0",
    "run_coverage",
    "METHODS",
]

METHODS = ("po", "mbb", "etbb", "web", "pwb")
CI_TYPES = ("percentile", "se_normal")
ORACLE_DRAWS = 10_000_000
ORACLE_SEED = 20240101


def _check_ar2(rho1: float, rho2: float):
    if not (-1 < rho2 < 1 and rho2 + rho1 < 1 and rho2 - rho1 < 1):
        raise NonStationary(f"non-stationary AR(2): rho1={rho1}, rho2={rho2}")


def sigma_u2(rho1: float, rho2: float, sigma_v2: float = 1.0) -> float:
    """Stationary variance of an AR(2) with innovation variance sigma_v2."""
    _check_ar2(rho1, rho2)
    return (1 - rho2) * sigma_v2 / ((1 + rho2) * (1 - rho1 - rho2) * (1 + rho1 - rho2))


def _innovations(innovation: str, shape, rng: np.random.Generator) -> np.ndarray:
    if innovation == "normal":
        return rng.standard_normal(shape)
    if innovation == "t3":
        return rng.standard_t(3, shape)
    raise ValidationError(f"unknown innovation law {innovation!r}")


def gen_ar2(T: int, rho1: float, rho2: float, innovation: str, burn_in: int, rng, n: int | None = None):
    """AR(2) path(s) started at zero; the first ``burn_in`` values are discarded.

    With ``n`` given the result is an n x T array of independent paths.
    """
    _check_ar2(rho1, rho2)
    shape = (burn_in + T,) if n is None else (n, burn_in + T)
    v = _innovations(innovation, shape, rng)
    u = signal.lfilter([1.0], [1.0, -rho1, -rho2], v, axis=-1)
    return u[..., burn_in:]


@functools.lru_cache(maxsize=64)
def _cached_oracle(innovation, rho1, rho2, tau, n_draws, seed):
    rng = stream(seed, STREAM_SIM, 999)
    u = gen_ar2(n_draws, rho1, rho2, innovation, 500, rng)
    q = float(np.quantile(u, tau))
    # batch means absorb the serial correlation of the long path
    nb = 100
    batches = np.quantile(u[: (n_draws // nb) * nb].reshape(nb, -1), tau, axis=1)
    se = float(np.std(batches, ddof=1) / math.sqrt(nb))
    return q, se


def stationary_quantile_oracle(
    innovation: str,
    rho1: float,
    rho2: float,
    tau: float,
    n_draws: int = ORACLE_DRAWS,
    seed: int = ORACLE_SEED,
) -> tuple[float, float]:
    """(tau-quantile, standard error) of the stationary AR(2) law, from one long path."""
    if n_draws < 1_000_000:
        raise ValidationError("the quantile oracle needs at least 10^6 draws")
    _check_ar2(rho1, rho2)
    return _cached_oracle(innovation, float(rho1), float(rho2), float(tau), int(n_draws), int(seed))


def true_beta0(innovation: str, rho1: float, rho2: float, tau: float, zeta: float) -> float:
    if zeta == 0:
        return 1.0
    if innovation == "normal":
        q = math.sqrt(sigma_u2(rho1, rho2, 1.0)) * stats.norm.ppf(tau)
    elif tau == 0.5:
        q = 0.0
    else:
        q = stationary_quantile_oracle(innovation, rho1, rho2, tau)[0]
    return 1.0 + zeta * q


@dataclass(frozen=True)
class SimConfig:
    N: int = 5
    T: int = 200
    tau: float = 0.5
    zeta: float = 0.0
    alpha_mode: str = "i_over_N"
    innovation: str = "normal"
    rho1_u: float = 0.7
    rho2_u: float = 0.1
    rho1_e: float = 0.7
    rho2_e: float = 0.1
    burn_in: int = 500
    mc_reps: int = 300
    B: int = 200
    level: float = 0.9
    seed: int = 1
    methods: tuple = METHODS
    block_length: int | None = None
    pwb_length: int | None = None
    kernel: str = "triangular"
    bandwidth: float | None = None
    max_length: int = 25

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.N < 1 or self.T < 2:
            raise ValidationError("need N >= 1 and T >= 2")
        if not 0 < self.tau < 1:
            raise ValidationError("tau must be in (0,1)")
        if not 0 < self.level < 1:
            raise ValidationError("level must be in (0,1)")
        if self.alpha_mode not in ("i_over_N", "gaussian"):
            raise ValidationError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.innovation not in ("normal", "t3"):
            raise ValidationError(f"unknown innovation law {self.innovation!r}")
        _check_ar2(self.rho1_u, self.rho2_u)
        _check_ar2(self.rho1_e, self.rho2_e)
        if self.burn_in < 200:
            raise ValidationError("burn_in must be >= 200")
        if self.mc_reps < 1 or self.B < 2:
            raise ValidationError("need mc_reps >= 1 and B >= 2")
        for name in ("block_length", "pwb_length"):
            v = getattr(self, name)
            if v is not None and not 1 <= v <= self.T:
                raise ValidationError(f"{name} must satisfy 1 <= l <= T")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValidationError(f"methods must be drawn from {METHODS} (got {bad or 'none'})")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        return d

    def kernel_spec(self) -> KernelSpec:
        h = self.bandwidth if self.bandwidth is not None else KernelSpec.default(self.T).bandwidth
        return KernelSpec(self.kernel, h)


def gen_panel(config: SimConfig, rng: np.random.Generator) -> tuple[PanelDataset, float]:
    n, t = config.N, config.T
    if config.alpha_mode == "i_over_N":
        alpha = np.arange(1, n + 1) / n
    else:
        alpha = rng.standard_normal(n)
    z = rng.chisquare(3, n)
    eps = gen_ar2(t, config.rho1_e, config.rho2_e, config.innovation, config.burn_in, rng, n=n)
    u = gen_ar2(t, config.rho1_u, config.rho2_u, config.innovation, config.burn_in, rng, n=n)
    x = 0.5 * alpha[:, None] + z[:, None] + eps
    y = alpha[:, None] + x + (1 + config.zeta * x) * u
    beta0 = true_beta0(config.innovation, config.rho1_u, config.rho2_u, config.tau, config.zeta)
    return PanelDataset.from_arrays(y, x), beta0


@dataclass
class MethodSummary:
    reps: int = 0
    covered: dict = field(default_factory=lambda: {c: 0 for c in CI_TYPES})
    width: dict = field(default_factory=lambda: {c: 0.0 for c in CI_TYPES})
    failures: int = 0
    dropped_replicates: int = 0

    def to_dict(self) -> dict:
        r = max(self.reps, 1)
        out = {"reps": self.reps, "failures": self.failures, "dropped_replicates": self.dropped_replicates}
        for c in CI_TYPES:
            if c in self.covered:
                out[f"coverage_{c}"] = self.covered[c] / r if self.reps else None
                out[f"mean_width_{c}"] = self.width[c] / r if self.reps else None
        return out


@dataclass
class CoverageReport:
    config: SimConfig
    methods: dict
    length_histogram: dict
    selection_failures: int
    wall_clock: float

    def coverage(self, method: str, ci: str = "se_normal") -> float:
        return self.methods[method].to_dict()[f"coverage_{ci}"]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "config": self.config.to_dict(),
            "methods": {m: s.to_dict() for m, s in self.methods.items()},
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
            "selection_failures": self.selection_failures,
        }
        if include_timing:
            d["wall_clock_seconds"] = self.wall_clock
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, default=_json_default) + "\n"

    def table_csv(self, cis=("se_normal", "percentile")) -> str:
        """Rows shaped like the published coverage tables, one per interval type."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N,T", "tau", "zeta", "alpha", "innovation", "ci"] + [m.upper() for m in METHODS])
        c = self.config
        for ci in cis:
            row = [f"{c.N},{c.T}", repr(c.tau), repr(c.zeta), c.alpha_mode, c.innovation, ci]
            for m in METHODS:
                cov = self.methods[m].to_dict().get(f"coverage_{ci}") if m in self.methods else None
                row.append("" if cov is None else _fmt(cov))
            w.writerow(row)
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l_hat", "count"])
        for k, v in sorted(self.length_histogram.items()):
            w.writerow([k, v])
        return buf.getvalue()


def _fmt(v) -> str:
    return format(v, ".17g")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _rep_seed(seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_SIM, rep, 1))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _one_rep(config: SimConfig, rep: int) -> dict:
    """Everything a single Monte Carlo repetition contributes, as plain data."""
    data, beta0 = gen_panel(config, stream(config.seed, STREAM_SIM, rep))
    opts = SolverOptions()
    out = {"l_hat": None, "methods": {}}
    try:
        fit = fit_feqr(data, config.tau, opts)
    except NumericalError as exc:
        out["error"] = str(exc)
        return out
    bseed = _rep_seed(config.seed, rep)
    need_l = ("pwb" in config.methods and config.pwb_length is None) or (
        config.block_length is None and any(m in config.methods for m in ("mbb", "etbb"))
    )
    l_hat = None
    if need_l:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            diag = select_length_per_unit(
                fit, centered_regressors(data), config.kernel_spec(), min(config.max_length, config.T)
            )
        l_hat = diag.l_hat
        out["l_hat"] = l_hat
    for m in config.methods:
        rec = {}
        try:
            if m == "po":
                sig = powell_variance(fit, data)
                cis = {"se_normal": se_ci(fit.beta, sig, config.level)}
                dropped = 0
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    if m == "pwb":
                        pl = config.pwb_length or l_hat
                        res = run_pwb(data, config.tau, pl, config.B, bseed, opts, fit=fit, threads=1)
                    else:
                        bl = config.block_length or l_hat
                        res = run_alt_bootstrap(m, data, config.tau, bl, config.B, bseed, opts, fit=fit, threads=1)
                sig = boot_covariance(res.beta_star, fit.beta)
                cis = {"se_normal": se_ci(fit.beta, sig, config.level)}
                if res.beta_star.shape[0] >= 20:
                    cis["percentile"] = percentile_ci(res.beta_star, config.level)
                dropped = res.failures
            rec = {
                "ok": True,
                "dropped": dropped,
                "covered": {c: ci.covers(beta0) for c, ci in cis.items()},
                "width": {c: float(ci.width) for c, ci in cis.items()},
            }
        except NumericalError as exc:
            rec = {"ok": False, "error": str(exc)}
        out["methods"][m] = rec
    return out


def run_coverage(config: SimConfig, threads: int | None = None) -> CoverageReport:
    """Coverage of each method's intervals for beta_0 over ``mc_reps`` simulated panels.

    Repetition r uses data stream (seed, SIM, r) and bootstrap seed derived
    from (seed, SIM, r, 1), so the report is the same for any ``threads``.
    """
    t0 = time.perf_counter()
    reps = ordered_map(lambda r: _one_rep(config, r), list(range(config.mc_reps)), threads)
    summaries = {}
    for m in config.methods:
        s = MethodSummary()
        if m == "po":
            s.covered = {"se_normal": 0}
            s.width = {"se_normal": 0.0}
        summaries[m] = s
    hist: dict = {}
    sel_fail = 0
    for rec in reps:
        if rec["l_hat"] is not None:
            hist[rec["l_hat"]] = hist.get(rec["l_hat"], 0) + 1
        elif "error" in rec:
            sel_fail += 1
        for m in config.methods:
            s = summaries[m]
            r = rec["methods"].get(m)
            if r is None or not r["ok"]:
                s.failures += 1
                continue
            s.reps += 1
            s.dropped_replicates += r["dropped"]
            for c in s.covered:
                if c in r["covered"]:
                    s.covered[c] += int(r["covered"][c])
                    s.width[c] += r["width"][c]
    return CoverageReport(config, summaries, hist, sel_fail, time.perf_counter() - t0)
