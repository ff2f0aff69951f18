"""Command-line front end: ``panelqboot {fit,bootstrap,select-length,simulate}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Every report
embeds the resolved settings and master seed so a run can be replayed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._engine import STREAM_ETBB, STREAM_MBB, STREAM_PWB, STREAM_WEB
from .altboot import run_alt_bootstrap
from .errors import NumericalError, ValidationError
from .inference import boot_covariance, percentile_ci, powell_variance, se_ci, wald_test
from .lengthsel import (
    KernelSpec,
    centered_regressors,
    select_length_closed_form,
    select_length_per_unit,
)
from .paneldata import load_csv
from .pwb import run_pwb
from .qrsolver import SolverOptions, fit_feqr
from .simlab import METHODS, SimConfig, run_coverage

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

# below this many units the exponential unit weights have little to average over
WEB_SMALL_N = 20
WEB_SMALL_N_WARNING = (
    "WEB relies on cross-sectional variation; with N={N} units its intervals are "
    "likely to undercover"
)

STREAMS = {"pwb": STREAM_PWB, "mbb": STREAM_MBB, "etbb": STREAM_ETBB, "web": STREAM_WEB}


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits (non-finite as null)."""

    def enc(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            items = [pad + enc(v, depth + 1) for v in o]
            return "[\n" + ",\n".join(items) + "\n" + end + "]"
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), depth)
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            f = float(o)
            return format(f, ".17g") if math.isfinite(f) else "null"
        return json.dumps(str(o))

    return enc(obj, 0) + "\n"


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _length_arg(s: str):
    if s == "auto":
        return s
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("length must be 'auto' or a positive integer") from None
    return v


def _common(p: argparse.ArgumentParser, data: bool = True):
    p.add_argument("--config", help="JSON file whose keys mirror flag names; flags override it")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=None, help="worker threads (env PANELQBOOT_THREADS)")
    if data:
        p.add_argument("--input", help="panel CSV: unit,time,y,x1,...,xp")
        p.add_argument("--tau", type=float, default=0.5)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=50)


def _selection(p: argparse.ArgumentParser):
    p.add_argument("--kernel", choices=("triangular", "rectangular"), default="triangular")
    p.add_argument("--bandwidth", type=float, default=None, help="kernel bandwidth in lags")
    p.add_argument("--max-length", type=int, default=None, help="search cap L (default min(25, T))")
    p.add_argument("--centering", choices=("demean", "density_weighted"), default="demean")
    p.add_argument("--selector", choices=("per-unit", "closed-form"), default="per-unit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="panelqboot", description="Fixed-effects quantile regression with bootstrap inference.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate the FE-QR slopes and effects")
    _common(p)

    p = sub.add_parser("bootstrap", help="confidence intervals and covariance by resampling")
    _common(p)
    _selection(p)
    p.add_argument("--method", choices=("pwb", "mbb", "etbb", "web", "po"), default="pwb")
    p.add_argument("--reps", type=int, default=400)
    p.add_argument("--length", type=_length_arg, default="auto")
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--restrict", nargs=2, metavar=("R_CSV", "r_CSV"), help="Wald test of R beta = r")

    p = sub.add_parser("select-length", help="choose the PWB cell length")
    _common(p)
    _selection(p)

    p = sub.add_parser("simulate", help="Monte Carlo coverage experiment")
    _common(p, data=False)
    for name, typ in (
        ("--n", int), ("--t", int), ("--tau", float), ("--zeta", float),
        ("--rho1-u", float), ("--rho2-u", float), ("--rho1-e", float), ("--rho2-e", float),
        ("--burn-in", int), ("--mc-reps", int), ("--reps", int), ("--level", float),
        ("--seed", int), ("--block-length", int), ("--pwb-length", int), ("--bandwidth", float), ("--max-length", int),
    ):
        p.add_argument(name, type=typ, default=None)
    p.add_argument("--alpha-mode", choices=("i_over_N", "gaussian"), default=None)
    p.add_argument("--innovation", choices=("normal", "t3"), default=None)
    p.add_argument("--kernel", choices=("triangular", "rectangular"), default=None)
    p.add_argument("--methods", default=None, help=f"comma-separated subset of {','.join(METHODS)}")
    return ap


# simulate flag -> SimConfig field
SIM_FIELDS = {
    "n": "N", "t": "T", "tau": "tau", "zeta": "zeta", "rho1_u": "rho1_u", "rho2_u": "rho2_u",
    "rho1_e": "rho1_e", "rho2_e": "rho2_e", "burn_in": "burn_in", "mc_reps": "mc_reps", "reps": "B",
    "level": "level", "seed": "seed", "block_length": "block_length", "pwb_length": "pwb_length", "bandwidth": "bandwidth",
    "max_length": "max_length", "alpha_mode": "alpha_mode", "innovation": "innovation",
    "kernel": "kernel", "methods": "methods",
}


def _config_path(name: str) -> Path:
    """A file path, or the name of a configuration bundled with the package."""
    path = Path(name)
    if path.exists():
        return path
    bundled = Path(__file__).parent / "configs" / name
    return bundled if bundled.exists() else path


def parse_args(argv):
    """Parse twice: once to find --config, then with its contents as defaults."""
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(_config_path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults, extra = {}, {}
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if args.command == "simulate" and key not in known:
                # SimConfig field names are accepted as well
                inv = {f: flag for flag, f in SIM_FIELDS.items()}
                key = inv.get(k, key)
            if key in known:
                defaults[key] = ",".join(v) if key == "methods" and isinstance(v, list) else v
            else:
                extra[k] = v
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "format", "threads")}


def _load(args):
    if not args.input:
        raise ValidationError("--input is required")
    try:
        return load_csv(args.input)
    except OSError as exc:
        raise ValidationError(f"cannot read {args.input}: {exc.strerror or exc}") from None


def _opts(args) -> SolverOptions:
    return SolverOptions(tol=args.tol, max_iter=args.max_iter)


def _check_tau(tau):
    if not 0 < tau < 1:
        raise ValidationError("tau must be in (0,1)")


def _kernel(args, T) -> KernelSpec:
    h = args.bandwidth if args.bandwidth is not None else KernelSpec.default(T).bandwidth
    return KernelSpec(args.kernel, h)


def _fit_block(fit, data) -> dict:
    return {
        "xnames": list(data.xnames),
        "beta": fit.beta,
        "alpha": dict(zip(data.unit_ids, fit.alpha.tolist())),
        "objective": fit.objective,
        "iterations": fit.iterations,
        "duality_gap": fit.duality_gap,
        "vertex": fit.vertex,
        "N": data.N,
        "T": data.T,
        "p": data.p,
    }


def _select(args, fit, data) -> dict:
    kernel = _kernel(args, data.T)
    L = args.max_length if args.max_length is not None else min(25, data.T)
    if args.selector == "closed-form":
        l_hat = min(select_length_closed_form(fit, kernel), L)
        return {"l_hat": l_hat, "selector": "closed-form", "kernel": kernel.shape, "bandwidth": kernel.bandwidth, "L": L}
    xc = centered_regressors(data, args.centering, fit)
    d = select_length_per_unit(fit, xc, kernel, L).to_dict()
    d["selector"] = "per-unit"
    d["per_unit"] = dict(zip(data.unit_ids, d["per_unit"]))
    return d


def cmd_fit(args) -> dict:
    _check_tau(args.tau)
    data = _load(args)
    fit = fit_feqr(data, args.tau, _opts(args))
    return {"command": "fit", "config": _resolved(args), "fit": _fit_block(fit, data)}


def cmd_select_length(args) -> dict:
    _check_tau(args.tau)
    data = _load(args)
    fit = fit_feqr(data, args.tau, _opts(args))
    return {"command": "select-length", "config": _resolved(args), "selection": _select(args, fit, data)}


def _restriction(paths):
    try:
        R = np.loadtxt(paths[0], delimiter=",", ndmin=2)
        r = np.loadtxt(paths[1], delimiter=",", ndmin=1).reshape(-1)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read restriction files: {exc}") from None
    return R, r


def cmd_bootstrap(args) -> dict:
    _check_tau(args.tau)
    if not 0 < args.level < 1:
        raise ValidationError("level must be in (0,1)")
    if args.reps < 2:
        raise ValidationError("--reps must be >= 2")
    data = _load(args)
    opts = _opts(args)
    fit = fit_feqr(data, args.tau, opts)
    report = {"command": "bootstrap", "config": _resolved(args), "fit": _fit_block(fit, data)}
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.method == "po":
            sigma = powell_variance(fit, data)
            draws = None
        else:
            l = None
            if args.method != "web":
                if args.length == "auto":
                    sel = _select(args, fit, data)
                    report["selection"] = sel
                    l = sel["l_hat"]
                else:
                    l = args.length
                report["length"] = l
            elif data.N < WEB_SMALL_N:
                notes.append(WEB_SMALL_N_WARNING.format(N=data.N))
            if args.method == "pwb":
                res = run_pwb(data, args.tau, l, args.reps, args.seed, opts, fit=fit, threads=args.threads)
            else:
                res = run_alt_bootstrap(args.method, data, args.tau, l, args.reps, args.seed, opts, fit=fit, threads=args.threads)
            draws = res.beta_star
            sigma = boot_covariance(draws, fit.beta)
            report["replay"] = {
                "master_seed": args.seed,
                "stream": STREAMS[args.method],
                "replicate_key": "SeedSequence(master_seed, spawn_key=(stream, r)), r = 0..reps-1",
                "replicates_used": int(draws.shape[0]),
                "failed_replicates": res.failed_replicates,
            }
    notes.extend(str(w.message) for w in caught)
    cis = []
    for j in range(data.p):
        if draws is not None and draws.shape[0] >= 20:
            cis.append(percentile_ci(draws, args.level, j).to_dict())
        cis.append(se_ci(fit.beta, sigma, args.level, j).to_dict())
    report["intervals"] = cis
    report["sigma"] = sigma.sigma
    report["sigma_source"] = sigma.source
    if args.restrict:
        R, r = _restriction(args.restrict)
        W, pv = wald_test(R, r, fit.beta, sigma)
        report["wald"] = {"R": R, "r": r, "statistic": W, "df": int(R.shape[0]), "p_value": pv}
    report["warnings"] = notes
    return report


def cmd_simulate(args) -> tuple[dict, object]:
    fields = {}
    for flag, name in SIM_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            fields[name] = v
    if isinstance(fields.get("methods"), str):
        fields["methods"] = tuple(m.strip() for m in fields["methods"].split(",") if m.strip())
    config = SimConfig.from_dict(fields)
    rep = run_coverage(config, threads=args.threads)
    return {"command": "simulate", **rep.to_dict()}, rep


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _flat_rows(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flat_rows(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj.tolist() if isinstance(obj, np.ndarray) else obj):
            yield from _flat_rows(v, f"{prefix}[{i}]")
    else:
        if isinstance(obj, (float, np.floating)):
            obj = _fmt(obj)
        yield prefix, "" if obj is None else obj


def _as_csv(report: dict) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in _flat_rows(report):
        w.writerow([k, v])
    return buf.getvalue()


def _emit(args, report):
    _write(_as_csv(report) if args.format == "csv" else dumps(report), args.out)


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.command == "fit":
            _emit(args, cmd_fit(args))
        elif args.command == "select-length":
            _emit(args, cmd_select_length(args))
        elif args.command == "bootstrap":
            report = cmd_bootstrap(args)
            for note in report["warnings"]:
                print(f"warning: {note}", file=sys.stderr)
            _emit(args, report)
        else:
            report, rep = cmd_simulate(args)
            if args.out:
                base = Path(args.out)
                stem = base.with_suffix("") if base.suffix == ".json" else base
                Path(f"{stem}.json").write_text(dumps(report))
                Path(f"{stem}_table.csv").write_text(rep.table_csv())
                Path(f"{stem}_hist.csv").write_text(rep.histogram_csv())
                Path(f"{stem}_timing.json").write_text(dumps({"wall_clock_seconds": rep.wall_clock}))
            else:
                _emit(args, report)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
