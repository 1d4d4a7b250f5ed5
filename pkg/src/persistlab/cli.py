"""Command-line front end.

Exit status: 0 success, 1 a check failed, 2 usage or validation error.
Output is CSV (header row, one record per line) or JSON mirroring the same
records, written to ``--out`` or stdout. No timestamps or host details are
recorded, so identical flags give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import checks
from .correlation import (
    CorrelationSpec,
    Kind,
    corr_eval,
    drift_constant,
    drift_function,
    limit_gaps,
)
from .errors import (
    BudgetInfeasibleError,
    ConvergenceError,
    CoverageError,
    DomainError,
    EmbeddingError,
    GridTooLargeError,
    InsufficientDataError,
)
from .persistence import (
    BIAS_NOTE,
    DEFAULT_WINDOW,
    derive_seed,
    estimate_exponent,
    exponent_curve,
    persistence_probability,
)
from .sampler import GridSpec, sample_gsp, write_paths

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

FIGURE_TRIALS = 200_000
FIGURE_STEP = 0.01
FIGURE_IFBM_H = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
FIGURE_RL_H = (0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)
FIGURE_FBM_H = (0.1, 0.3, 0.5, 0.7, 0.9)


class UsageError(Exception):
    pass


def _floats(text):
    """Comma-separated floats; an empty string is a usage error."""
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _window(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("window needs two values T_min,T_max")
    return tuple(vals)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def render(records, fmt, columns=None) -> str:
    """Records as CSV text or a JSON array."""
    if fmt == "json":
        return json.dumps([_jsonable(r) for r in records], indent=1) + "\n"
    if columns is None:
        columns = []
        for r in records:
            columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in records:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _spec_from_args(args) -> CorrelationSpec:
    kind = Kind.parse(args.family)
    hurst = None
    if kind not in (Kind.OU, Kind.COSH_LIMIT):
        if not args.h:
            raise UsageError(f"family {kind.value} needs --h")
        if len(args.h) != 1:
            raise UsageError("give a single --h value")
        hurst = args.h[0]
    rate = getattr(args, "rate", None) if kind is Kind.OU else None
    return CorrelationSpec(kind, hurst, rate, getattr(args, "time_scale", 1.0))


# ---------------------------------------------------------------- commands


def cmd_verify(args) -> int:
    hs = args.h
    results = checks.full_suite(hs, args.perturb) if args.all else checks.identity_suite(hs, args.perturb)
    records = [
        {
            "check": r.name,
            "residual": r.residual,
            "tolerance": r.tolerance,
            "kind": r.kind,
            "status": "pass" if r.passed else "FAIL",
        }
        for r in results
    ]
    emit(render(records, args.format), args.out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_corr_eval(args) -> int:
    spec = _spec_from_args(args)
    taus = np.array(args.tau)
    values = np.atleast_1d(corr_eval(spec, taus))
    records = [
        {"family": spec.kind.value, "H": spec.hurst, "time_scale": spec.time_scale,
         "tau": float(t), "value": float(v)}
        for t, v in zip(taus, values)
    ]
    emit(render(records, args.format), args.out)
    return EXIT_OK


def cmd_corr_limit(args) -> int:
    kind = Kind.parse(args.family)
    hs = args.h or (
        list(checks.SMALL_H) if kind is Kind.IFBM_LAMPERTI and args.direction == "0"
        else list(checks.LARGE_H) if kind is Kind.IFBM_LAMPERTI
        else list(checks.RL_H)
    )
    taus = args.tau or (list(checks.LIMIT_TAUS) if kind is Kind.IFBM_LAMPERTI else [1.0])
    a_values = args.a or (list(checks.RL_A) if kind is Kind.RL_LAMPERTI else [None])
    records, ok = [], True
    for a in a_values:
        rows = limit_gaps(kind, args.direction, hs, taus, a=1.0 if a is None else a)
        for tau in taus:
            seq = [r for r in rows if r.tau == float(tau)]
            gaps = [r.gap for r in seq]
            monotone = all(b <= x for x, b in zip(gaps[:-1], gaps[1:]))
            ok &= monotone and gaps[-1] <= args.max_gap
            for r in seq:
                records.append({"family": kind.value, "direction": args.direction, "a": a,
                                "H": r.H, "tau": r.tau, "value": r.value, "limit": r.limit,
                                "gap": r.gap, "monotone": monotone})
    emit(render(records, args.format), args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_drift_check(args) -> int:
    if not args.h or len(args.h) != 1:
        raise UsageError("drift-check needs a single --h")
    H, eta = args.h[0], args.eta
    if args.t_max < 1.0:
        raise UsageError("--t-max must be at least 1")
    c = drift_constant(H, eta)
    grid = np.unique(np.concatenate([np.linspace(0.5, 1.0, 51), np.geomspace(1.0, args.t_max, args.points)]))
    phi = drift_function(H, eta, grid, c=c)
    nondecreasing = bool(np.all(np.diff(phi) >= 0.0))
    above_one = bool(np.all(phi[grid >= 1.0] >= 1.0 - 1e-12))
    at_one = float(drift_function(H, eta, 1.0, c=c))
    ok = nondecreasing and above_one and abs(at_one - 1.0) <= 1e-8
    records = [{"t": float(t), "phi": float(p)} for t, p in zip(grid, phi)]
    summary = {"H": H, "eta": eta, "c": c, "phi_at_1": at_one, "nondecreasing": nondecreasing,
               "at_least_one_beyond_1": above_one, "status": "pass" if ok else "FAIL"}
    if args.format == "json":
        emit(json.dumps(_jsonable({"summary": summary, "phi": records}), indent=1) + "\n", args.out)
    else:
        emit(render(records, "csv"), args.out)
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sample(args) -> int:
    spec = _spec_from_args(args)
    grid = GridSpec.from_step(args.horizon, args.grid_step)
    batch = sample_gsp(spec, grid, args.trials, args.seed, args.workers)
    if args.format == "json":
        text = json.dumps(_jsonable({"metadata": batch.metadata(),
                                     "times": batch.grid.times.tolist(),
                                     "values": batch.values.tolist()}), indent=1) + "\n"
        emit(text, args.out)
    elif args.out is None:
        buf = io.StringIO()
        buf.write("# " + json.dumps(batch.metadata(), sort_keys=True) + "\n")
        np.savetxt(buf, batch.values, delimiter=",", fmt="%.17g")
        sys.stdout.write(buf.getvalue())
    else:
        write_paths(batch, args.out, "npz" if str(args.out).endswith(".npz") else "csv")
    return EXIT_OK


def _provenance(spec, args):
    return {"spec": spec.describe(), "grid_step": args.grid_step, "seed": args.seed,
            "trials": args.trials, "bias": BIAS_NOTE}


def cmd_estimate(args) -> int:
    spec = _spec_from_args(args)
    if args.window is None:
        est = persistence_probability(spec, args.horizon, args.grid_step, args.trials,
                                      args.seed, args.workers)
        rec = est.as_record()
        rec["spec"] = spec.describe()
        emit(render([rec], args.format), args.out)
        return EXIT_OK
    fit = estimate_exponent(spec, args.grid_step, args.window, args.trials, args.seed,
                            workers=args.workers)
    records = []
    for p in fit.points:
        rec = p.as_record()
        rec.update({"theta_hat": fit.theta_hat, "stderr": fit.stderr,
                    "stderr_method": fit.stderr_method, "intercept": fit.intercept,
                    "window": list(fit.window), "spec": spec.describe()})
        records.append(rec)
    emit(render(records, args.format), args.out)
    return EXIT_OK


def _curve_records(points, extra=None):
    out = []
    for p in points:
        rec = {"family": p.family, "H": p.H, "theta_hat": p.theta_hat, "stderr": p.stderr,
               "status": p.status}
        rec.update(p.reference)
        if extra:
            rec.update(extra)
        out.append(rec)
    return out


def cmd_curve(args) -> int:
    if not args.h:
        raise UsageError("curve needs --h")
    window = args.window or DEFAULT_WINDOW
    pts = exponent_curve(args.family, args.h, args.trials, args.grid_step, window, args.seed,
                         args.workers)
    emit(render(_curve_records(pts, {"grid_step": args.grid_step, "trials": args.trials,
                                     "seed": args.seed}), args.format), args.out)
    return EXIT_OK


FIGURE_COLUMNS = ("family", "H", "theta_hat", "stderr", "reference_value", "conjecture",
                  "lower_bound", "upper_bound", "status")


def figure1_records(trials, step, window, seed, workers=1, ifbm_h=FIGURE_IFBM_H,
                    rl_h=FIGURE_RL_H, fbm_h=FIGURE_FBM_H):
    """Rows of the exponent-vs-H comparison across families."""
    rows = []

    def add(family, H, theta, se, ref, status="ok", conj=None, lo=None, hi=None):
        rows.append({"family": family, "H": H, "theta_hat": theta, "stderr": se,
                     "reference_value": ref, "conjecture": conj, "lower_bound": lo,
                     "upper_bound": hi, "status": status})

    for k, (family, hs) in enumerate((("ifbm", ifbm_h), ("rl", rl_h), ("fbm", fbm_h))):
        pts = exponent_curve(family, hs, trials, step, window, derive_seed(seed, k), workers)
        for p in pts:
            ref = p.reference
            if family == "ifbm":
                add(family, p.H, p.theta_hat, p.stderr, None, p.status, ref["conjecture"],
                    ref["lower_bound"], ref["upper_bound"])
            elif family == "fbm":
                add(family, p.H, p.theta_hat, p.stderr, 1.0 - p.H, p.status)
            else:
                add(family, p.H, p.theta_hat, p.stderr, ref.get("exact"), p.status)
    try:
        fit = estimate_exponent(CorrelationSpec(Kind.COSH_LIMIT), step, window, trials,
                                derive_seed(seed, 3), workers=workers)
        add("cosh", math.inf, fit.theta_hat, fit.stderr, 3.0 / 16.0)
    except BudgetInfeasibleError:
        add("cosh", math.inf, math.nan, math.nan, 3.0 / 16.0, "budget-infeasible")
    add("reference-bm", 0.5, None, None, 0.5, "reference")
    add("reference-ibm", 0.5, None, None, 0.25, "reference")
    add("reference-rl-asymptote", math.inf, None, None, 3.0 / 16.0, "reference")
    return rows


def cmd_figure1(args) -> int:
    trials = args.trials or FIGURE_TRIALS * (10 if args.full else 1)
    step = args.grid_step or FIGURE_STEP
    window = args.window or DEFAULT_WINDOW
    rows = figure1_records(trials, step, window, args.seed, args.workers)
    emit(render(rows, args.format, FIGURE_COLUMNS), args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="persistlab",
        description="Correlation kernels and persistence-exponent experiments for "
        "Lamperti transforms of self-similar Gaussian processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, family=True, mc=False):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
        if family:
            p.add_argument("--family", default="ou",
                           help="ifbm, rl, fbm, ou, slepian or cosh")
            p.add_argument("--h", type=_floats, default=None, help="Hurst index (list where allowed)")
            p.add_argument("--rate", type=float, default=None, help="OU rate")
            p.add_argument("--time-scale", type=float, default=1.0,
                           help="evaluate the correlation at tau / time_scale")
        if mc:
            p.add_argument("--grid-step", type=float, default=0.005)
            p.add_argument("--trials", type=int, default=100_000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("verify", help="deterministic identity suite")
    common(p, family=False)
    p.add_argument("--h", type=_floats, default=None, help="override the H grid")
    p.add_argument("--all", action="store_true", help="also run bounds, limits and integral checks")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("corr-eval", help="evaluate a correlation function")
    common(p)
    p.add_argument("--tau", type=_floats, required=True)
    p.set_defaults(func=cmd_corr_eval)

    p = sub.add_parser("corr-limit", help="gaps of rescaled correlations to their limits")
    common(p, family=False)
    p.add_argument("--family", choices=("ifbm", "rl"), default="ifbm")
    p.add_argument("--direction", choices=("0", "1"), default="0", help="H -> 0 or H -> 1")
    p.add_argument("--h", type=_floats, default=None)
    p.add_argument("--tau", type=_floats, default=None)
    p.add_argument("--a", type=_floats, default=None, help="RL exponents a in gamma_H = e^(a/2H)")
    p.add_argument("--max-gap", type=float, default=checks.FINAL_GAP)
    p.set_defaults(func=cmd_corr_limit)

    p = sub.add_parser("drift-check", help="monotonicity of the drift function phi")
    common(p, family=False)
    p.add_argument("--h", type=_floats, default=[0.3])
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--t-max", type=float, default=100.0)
    p.add_argument("--points", type=int, default=400)
    p.set_defaults(func=cmd_drift_check)

    p = sub.add_parser("sample", help="sample stationary Gaussian paths")
    common(p, mc=True)
    p.add_argument("--horizon", type=float, default=1.0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="persistence probability or exponent")
    common(p, mc=True)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--window", type=_window, default=None,
                   help="T_min,T_max: fit an exponent instead of one probability")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("curve", help="exponent along a list of H")
    common(p, mc=True)
    p.add_argument("--window", type=_window, default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("figure1", help="exponent curves of all families")
    common(p, family=False)
    p.add_argument("--grid-step", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--full", action="store_true", help="ten times the default budget")
    p.set_defaults(func=cmd_figure1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("trials", "workers", "points"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            parser.error(f"--{name} must be positive")
    try:
        return args.func(args)
    except (UsageError, DomainError, GridTooLargeError, CoverageError) as exc:
        print(f"{parser.prog} {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetInfeasibleError, InsufficientDataError, EmbeddingError, ConvergenceError) as exc:
        print(f"{parser.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
