"""Command-line interface: ``bellhgm {eval,bench,asymp,mle,sample,test}``.

Data goes to stdout (JSON, JSON lines or CSV); diagnostics go to stderr.
Exit status is 0 on success, 2 for domain, capacity and argument errors and
3 for numeric failures.  Errors are reported as one JSON object on stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import mpmath
import numpy as np
from scipy.spatial import ConvexHull

from .asymptotics import gaussian_approx_logZ, gfc_asymptotic_logZ, ips_fit
from .errors import CapacityError, DomainError, NumericError
from .inference import (
    AHypDistribution,
    CurvedModel,
    asymptotic_variance,
    dm_mle_exists,
    mle_curved,
    mle_exists_cubic,
    mle_full,
    projection_threshold,
)
from .partitions import (
    ProblemSpec,
    gfc_log_x,
    gfc_x,
    odds_from_x,
    oracle_Z,
    polytope_membership,
    polytope_vertices,
    special_value,
)
from .pfaffian import IntegrationPath, dhgm, fraction_to_dtype, hgm_integrate
from .recurrence import gauss_manin, recurrence_Z
from .sampling import mcmc_sample, sample_exact, similar_test, write_jsonl

__all__ = ["main", "build_parser", "parse_param", "BENCH_COLUMNS", "ASYMP_COLUMNS"]

PRECISION_ENV = "BELLHGM_PRECISION"
PRECISIONS = {"double": np.float64, "extended": np.longdouble, "quad": "quad", "exact": object}
QUAD_BITS = 113
BENCH_SCHEMA = "bellhgm-bench/1"
ASYMP_SCHEMA = "bellhgm-asymp/1"
BENCH_COLUMNS = ["method", "n", "k", "alpha", "logZ", "seconds", "diff_vs_recurrence", "error"]
ASYMP_COLUMNS = ["method", "n", "k", "alpha", "logZ", "rel_error", "error"]
ASYMPTOTIC_FORMS = ("mittag-leffler", "fixed-k", "fixed-k-pos", "fixed-k-neg", "ips")
CURVE_POINTS = 200


class UsageError(DomainError):
    """Malformed command-line input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# parameter points
# --------------------------------------------------------------------------


def parse_param(text):
    """``gfc:<alpha>``, ``ones``, ``inv``, ``inv-factorial`` or ``file:<path>``.

    Returns ``(kind, value)``; ``value`` is the alpha string for ``gfc`` and
    the list of entries for ``file`` (JSON array or whitespace separated).
    """
    if text.startswith("gfc:"):
        body = text[4:]
        try:
            Fraction(body)
        except ValueError:
            raise UsageError(f"bad alpha in {text!r}") from None
        return "gfc", body
    if text in ("ones", "inv", "inv-factorial"):
        return text, None
    if text.startswith("file:"):
        path = text[5:]
        try:
            with open(path) as fh:
                raw = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
        try:
            values = json.loads(raw)
        except json.JSONDecodeError:
            values = raw.split()
        if not isinstance(values, list):
            raise UsageError("parameter file must hold a list of numbers")
        return "file", [str(v) for v in values]
    raise UsageError(f"unknown parameter point {text!r}")


def param_x_exact(param, width):
    """Indeterminates as Fractions."""
    kind, value = param
    if kind == "gfc":
        return gfc_x(Fraction(value), width)
    if kind == "ones":
        return [Fraction(1)] * width
    if kind == "inv":
        return [Fraction(1, i) for i in range(1, width + 1)]
    if kind == "inv-factorial":
        return [Fraction(1, math.factorial(i)) for i in range(1, width + 1)]
    if len(value) < width:
        raise UsageError(f"parameter file holds {len(value)} values, need {width}")
    try:
        return [Fraction(v) for v in value[:width]]
    except (ValueError, ZeroDivisionError):
        raise UsageError("parameter file entries must be numbers") from None


def param_log_x(param, width):
    """``log x`` in double precision."""
    kind, value = param
    if kind == "gfc":
        return gfc_log_x(float(Fraction(value)), width)
    if kind == "file":
        x = np.array([float(v) for v in param_x_exact(param, width)])
        if np.any(x <= 0):
            raise DomainError("indeterminates must be positive")
        return np.log(x)
    i = np.arange(1, width + 1)
    if kind == "ones":
        return np.zeros(width)
    if kind == "inv":
        return -np.log(i)
    return -np.array([math.lgamma(v + 1) for v in i])


def _param_alpha(param):
    return float(Fraction(param[1])) if param[0] == "gfc" else None


def _special_point(param):
    kind, value = param
    if kind == "gfc":
        return ("gfc", float(Fraction(value)))
    if kind == "file":
        raise DomainError("exact-point needs a named special point")
    return kind.replace("-", "_")


def default_gamma(n, k):
    """Largest common divisor ``gamma`` of ``n - k`` and ``k`` with ``(n - k)/gamma >= 2``."""
    g = math.gcd(n - k, k)
    for d in range(g, 0, -1):
        if g % d == 0 and (n - k) // d >= 2:
            return d
    raise DomainError("the Gaussian approximation needs n - k >= 2")


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _hgm_path(spec, param, steps):
    if param[0] == "gfc":
        return IntegrationPath("gfc", -1.0, float(Fraction(param[1])), steps)
    return IntegrationPath("log_linear", np.zeros(spec.width), param_log_x(param, spec.width), steps)


def evaluate(n, k, method, param, steps=500, precision="extended", gm=False, gamma=None,
             diagnostics=None):
    """Core of ``eval``; returns a JSON-ready dict without timing."""
    spec = ProblemSpec(n, k)
    width = spec.width
    dtype = PRECISIONS[precision]
    out = {"method": method, "n": n, "k": k}
    vec = None
    if method == "oracle":
        z = oracle_Z(spec, param_x_exact(param, width))
        out["Z"] = str(z)
        out["logZ"] = math.log(z) if z > 0 else None
        return out
    if precision in ("exact", "quad") and method != "dhgm":
        raise DomainError(f"precision {precision!r} is only available for dhgm")
    if method == "recurrence":
        lx = param_log_x(param, width)
        value = recurrence_Z(spec, log_x=lx)
        if gm and spec.dim >= 2:
            vec = gauss_manin(spec, log_x=lx)
    elif method == "hgm":
        vec = hgm_integrate(spec, _hgm_path(spec, param, steps), dtype=dtype, diagnostics=diagnostics)
        value = vec.z
    elif method == "dhgm":
        x = param_x_exact(param, width)
        if dtype is object:
            q = dhgm(spec, x, dtype=object)
            out["Z"] = str(q[0])
            out["logZ"] = math.log(q[0]) if q[0] > 0 else None
            if gm:
                out["gm"] = [str(v) for v in q]
            return out
        if precision == "quad":
            with mpmath.workprec(QUAD_BITS):
                q = dhgm(spec, [mpmath.mpf(v.numerator) / v.denominator for v in x],
                         dtype=object, number=mpmath.mpf)
                if q[0] <= 0:
                    raise NumericError("dhgm produced a non-positive Z")
                out["logZ"] = float(mpmath.log(q[0]))
                if gm:
                    out["gm"] = [mpmath.nstr(v, 34) for v in q]
            return out
        # round each rational once into the working precision
        vec = dhgm(spec, np.array([fraction_to_dtype(v, dtype) for v in x], dtype=dtype), dtype=dtype)
        value = vec.z
    elif method == "exact-point":
        value = special_value(_special_point(param), spec)
    elif method.startswith("asymptotic:"):
        form = method.split(":", 1)[1]
        out["logZ"] = asymptotic_logZ(spec, param, form, gamma)
        return out
    else:
        raise UsageError(f"unknown method {method!r}")
    if value.sign <= 0:
        raise NumericError(f"{method} produced a non-positive Z")
    out["logZ"] = value.log
    if gm and vec is not None:
        out["gm"] = vec.to_json()
    return out


def asymptotic_logZ(spec, param, form, gamma=None):
    if form not in ASYMPTOTIC_FORMS:
        raise UsageError(f"unknown asymptotic form {form!r}; choose from {', '.join(ASYMPTOTIC_FORMS)}")
    if form == "ips":
        gamma = default_gamma(spec.n, spec.k) if gamma is None else int(gamma)
        if (spec.n - spec.k) % gamma or spec.k % gamma:
            raise DomainError("gamma must divide both n - k and k")
        reduced = ProblemSpec(spec.n // gamma, spec.k // gamma)
        x = np.exp(param_log_x(param, reduced.width))
        fit = ips_fit(reduced, odds_from_x(x))
        return gaussian_approx_logZ(reduced, x, gamma, fit=fit)
    alpha = _param_alpha(param)
    if alpha is None:
        raise DomainError("this asymptotic form needs --param gfc:<alpha>")
    if form == "fixed-k":
        form = "fixed-k-pos" if alpha > 0 else "fixed-k-neg"
    return gfc_asymptotic_logZ(spec, alpha, form.replace("-", "_"))


def cmd_eval(args):
    if args.diagnostics and args.method != "hgm":
        raise UsageError("--diagnostics applies to the hgm method")
    t0 = time.perf_counter()
    out = evaluate(args.n, args.k, args.method, parse_param(args.param), args.steps,
                   args.precision, args.gm, args.gamma, args.diagnostics)
    if not args.no_timing:
        out["time_s"] = time.perf_counter() - t0
    _emit(out)


# --------------------------------------------------------------------------
# bench and asymp grids
# --------------------------------------------------------------------------


def _bench_cell(cell):
    method, n, k, alpha, steps, precision = cell
    param = ("gfc", str(alpha))
    t0 = time.perf_counter()
    try:
        log_z = evaluate(n, k, method, param, steps, precision)["logZ"]
        err = ""
    except (DomainError, CapacityError, NumericError) as exc:
        log_z, err = None, f"{type(exc).__name__}: {exc}"
    return log_z, time.perf_counter() - t0, err


def _run_cells(cells, workers):
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_bench_cell, cells))
    return [_bench_cell(c) for c in cells]


def _fmt(v):
    return "" if v is None else repr(float(v))


def cmd_bench(args):
    methods = args.methods.split(",")
    grid = [(n, n - d, a) for a in args.alpha for d in args.dk for n in args.n if 0 < d < n]
    cells = [(m, n, k, a, args.steps, args.precision) for (n, k, a) in grid for m in methods]
    ref_cells = [("recurrence", n, k, a, args.steps, args.precision) for (n, k, a) in grid]
    results = _run_cells(cells + ref_cells, args.workers)
    refs = {(c[1], c[2], c[3]): r[0] for c, r in zip(ref_cells, results[len(cells):])}
    w = csv.writer(sys.stdout, lineterminator="\n")
    sys.stdout.write(f"# schema: {BENCH_SCHEMA}\n")
    w.writerow(BENCH_COLUMNS)
    for c, (log_z, secs, err) in zip(cells, results):
        m, n, k, a = c[:4]
        ref = refs[(n, k, a)]
        diff = log_z - ref if log_z is not None and ref is not None else None
        seconds = "" if args.no_timing else f"{secs:.6f}"
        w.writerow([m, n, k, a, _fmt(log_z), seconds, _fmt(diff), err])


def cmd_asymp(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    sys.stdout.write(f"# schema: {ASYMP_SCHEMA}\n")
    w.writerow(ASYMP_COLUMNS)
    methods = args.methods.split(",")
    for n in args.n:
        k = n // 2 if args.k is None else args.k
        spec = ProblemSpec(n, k)
        for alpha in args.alpha:
            param = ("gfc", str(alpha))
            exact = recurrence_Z(spec, log_x=param_log_x(param, spec.width)).log
            w.writerow(["exact", n, k, alpha, _fmt(exact), "", ""])
            for m in methods:
                try:
                    val = asymptotic_logZ(spec, param, m)
                    rel, err = abs((val - exact) / exact), ""
                except (DomainError, NumericError) as exc:
                    val, rel, err = None, None, f"{type(exc).__name__}: {exc}"
                w.writerow([m, n, k, alpha, _fmt(val), _fmt(rel), err])


# --------------------------------------------------------------------------
# inference and sampling
# --------------------------------------------------------------------------


def _load_vector(text, name):
    if os.path.isfile(text):
        with open(text) as fh:
            text = fh.read()
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        raise UsageError(f"{name} must be a JSON array or a file holding one") from None
    if not isinstance(v, list) or not all(isinstance(e, (int, float)) for e in v):
        raise UsageError(f"{name} must be a list of numbers")
    return v


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def polytope_data(spec, sbar, alpha_hat, model, alpha_min=-50.0):
    """Plot-ready data for the ``k = n - 3`` picture in the ``(s3, s4)`` plane."""
    if spec.dim != 3:
        raise DomainError("--emit-polytope needs k = n - 3")
    pts = np.unique(np.array(polytope_vertices(spec))[:, 2:4], axis=0).astype(float)
    if len(pts) >= 3:
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
    else:
        verts = pts
    hi = model.upper - 1e-6
    u = np.linspace(0.0, 1.0, CURVE_POINTS)
    alphas = np.sort(hi - (hi - alpha_min) * u**3)
    curve = []
    for a in alphas:
        eta, _ = model.moments(spec, float(a))
        curve.append([float(a), float(eta[2]), float(eta[3])])
    c = projection_threshold(spec.n)
    out = {
        "plane": ["s3", "s4"],
        "vertices": verts.tolist(),
        "curve": {"columns": ["alpha", "eta3", "eta4"], "points": curve},
        "no_mle_boundary": {"equation": "s3 + 3 s4 = c", "c": c, "endpoints": [[c, 0.0], [0.0, c / 3]]},
        "sbar": [float(sbar[2]), float(sbar[3])],
    }
    if alpha_hat is not None:
        eta, _ = model.moments(spec, alpha_hat)
        out["projection_segment"] = [[float(sbar[2]), float(sbar[3])], [float(eta[2]), float(eta[3])]]
    return out


def cmd_mle(args):
    sbar = np.asarray(_load_vector(args.sbar, "--sbar"), dtype=float)
    model = args.model
    out = {"model": model, "n": args.n}
    if model == "full":
        spec = ProblemSpec(args.n, args.k)
        out["k"] = args.k
        verdict = polytope_membership(sbar, spec)
        out["polytope"] = verdict
        res = mle_full(spec, sbar, algo=args.algo)
        out["exists"] = verdict == "interior"
        out.update(res.to_json())
        if res.exists:
            out["asymptotic_covariance"] = np.linalg.inv(np.asarray(res.fisher_info)).tolist()
    elif model == "gfc" or model.startswith("dm:"):
        if model == "gfc":
            spec = ProblemSpec(args.n, args.k)
            out["k"] = args.k
            cm, target = CurvedModel("gfc"), spec
        else:
            try:
                m = int(model.split(":", 1)[1])
            except ValueError:
                raise UsageError("--model dm:<m> needs an integer m") from None
            cm, target, spec = CurvedModel("dm", m), args.n, None
        res = mle_curved(cm, target, sbar)
        out.update(res.to_json())
        out["exists"] = res.exists
        if spec is not None and spec.dim == 3:
            ok, coeffs = mle_exists_cubic(args.n, sbar)
            out["existence_check"] = {
                "s3_plus_3s4": float(sbar[2] + 3 * sbar[3]),
                "threshold": projection_threshold(args.n),
                "cubic_coefficients": [float(v) for v in coeffs],
                "exists": ok,
            }
        elif spec is None:
            out["existence_check"] = {"exists": dm_mle_exists(args.n, cm.m, sbar)}
        if res.exists:
            g = asymptotic_variance(cm, target, res.estimate)
            out["fisher_info"] = g
            out["asymptotic_variance"] = 1.0 / g
        if args.emit_polytope:
            if spec is None:
                raise DomainError("--emit-polytope is available for the gfc model")
            out["polytope"] = polytope_data(spec, sbar, res.estimate if res.exists else None, cm)
    else:
        raise UsageError(f"unknown model {model!r}")
    _emit({k: _plain(v) for k, v in out.items()})


def _distribution(args):
    spec = ProblemSpec(args.n, args.k)
    return AHypDistribution(spec, log_x=param_log_x(parse_param(args.param), spec.width))


def cmd_sample(args):
    dist = _distribution(args)
    rng = np.random.default_rng(args.seed)
    if args.sampler == "exact":
        states = sample_exact(dist, rng, size=args.M)
    else:
        states = mcmc_sample(dist, args.M, rng, burn_in=args.burn_in, thin=args.thin)
    if args.summary:
        keys, counts = np.unique(np.asarray(states), axis=0, return_counts=True)
        freq = {",".join(map(str, key)): int(c) / args.M for key, c in zip(keys.tolist(), counts)}
        _emit({"M": args.M, "seed": args.seed, "sampler": args.sampler, "frequencies": freq})
    else:
        write_jsonl(states, sys.stdout)


def cmd_test(args):
    dist = _distribution(args)
    s_obs = _load_vector(args.sobs, "--sobs")
    report = similar_test(dist, s_obs, M=args.M, sampler=args.sampler, seed=args.seed,
                          burn_in=args.burn_in, thin=args.thin)
    sys.stdout.write(report.to_json() + "\n")


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    default_prec = os.environ.get(PRECISION_ENV, "extended")
    p = _Parser(prog="bellhgm", description="Partial Bell polynomials: evaluation and inference.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("eval", help="evaluate log Z_{n,k}(x)")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--method", default="recurrence",
                   help="oracle|recurrence|hgm|dhgm|exact-point|asymptotic:<form>")
    e.add_argument("--param", default="ones", help="gfc:<alpha>|ones|inv|inv-factorial|file:<path>")
    e.add_argument("--steps", default="500", help="RK4 steps for hgm, or 'auto'")
    e.add_argument("--precision", choices=sorted(PRECISIONS), default=default_prec)
    e.add_argument("--gm", action="store_true", help="also print the Gauss-Manin vector")
    e.add_argument("--gamma", type=int, default=None, help="scale factor for asymptotic:ips")
    e.add_argument("--diagnostics", metavar="CSV", help="write per-step HGM diagnostics")
    e.add_argument("--no-timing", action="store_true", help="omit time_s for reproducible output")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="method x grid timing table (CSV)")
    b.add_argument("--n", type=_int_list, default=[100, 200, 400, 800])
    b.add_argument("--dk", type=_int_list, default=[10, 30], help="values of n - k")
    b.add_argument("--alpha", type=_float_list, default=[0.5])
    b.add_argument("--methods", default="recurrence,hgm,dhgm")
    b.add_argument("--steps", default="500")
    b.add_argument("--precision", choices=["double", "extended"], default=_float_prec(default_prec))
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--no-timing", action="store_true")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("asymp", help="asymptotic forms against the recurrence (CSV)")
    a.add_argument("--n", type=_int_list, default=[800, 400, 100, 40])
    a.add_argument("--k", type=int, default=None, help="fixed k (default n/2)")
    a.add_argument("--alpha", type=_float_list, default=[0.5, -1.0])
    a.add_argument("--methods", default="ips,mittag-leffler,fixed-k")
    a.set_defaults(func=cmd_asymp)

    m = sub.add_parser("mle", help="maximum-likelihood estimation")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--k", type=int, default=None)
    m.add_argument("--model", default="full", help="full|gfc|dm:<m>")
    m.add_argument("--sbar", required=True, help="JSON array or file")
    m.add_argument("--algo", choices=["newton", "gradient"], default="newton")
    m.add_argument("--emit-polytope", action="store_true")
    m.set_defaults(func=cmd_mle)

    for name, func, helptext in (("sample", cmd_sample, "draw size indices"),
                                 ("test", cmd_test, "similar test of goodness of fit")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--k", type=int, required=True)
        s.add_argument("--param", default="ones")
        s.add_argument("--M", type=int, default=10_000)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--burn-in", type=int, default=1000)
        s.add_argument("--thin", type=int, default=1)
        s.set_defaults(func=func)
        if name == "sample":
            s.add_argument("--sampler", choices=["exact", "mcmc"], default="exact")
            s.add_argument("--summary", action="store_true", help="print frequencies instead of draws")
        else:
            s.add_argument("--sobs", required=True, help="observed size index (JSON array)")
            s.add_argument("--sampler", choices=["exact", "mcmc", "enumerate"], default="exact")
    return p


def _float_prec(name):
    return name if name in ("double", "extended") else "extended"


def _check_args(args):
    if getattr(args, "precision", None) not in (None, *PRECISIONS):
        raise UsageError(f"unknown precision {args.precision!r}")
    if hasattr(args, "steps") and args.command in ("eval", "bench"):
        if args.steps != "auto":
            try:
                args.steps = int(args.steps)
            except ValueError:
                raise UsageError("--steps must be an integer or 'auto'") from None
    if args.command == "mle" and args.model != "dm" and not args.model.startswith("dm:") and args.k is None:
        raise UsageError("--k is required for this model")
    if getattr(args, "M", 1) < 1:
        raise UsageError("--M must be positive")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _check_args(args)
        args.func(args)
    except (DomainError, CapacityError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc), "exit_code": 2})
        print(f"bellhgm: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        _emit({"error": type(exc).__name__, "message": str(exc), "exit_code": 3})
        print(f"bellhgm: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
