"""
Command-line front end.

    qmcis cbc            construct a generating vector
    qmcis estimate       one estimate at a single N, as JSON
    qmcis convergence    full N grid for every configured method, as CSV
    qmcis fourier-check  Fourier coefficients against their decay bound, as CSV
    qmcis assumptions    convergence-condition report, as JSON

Exit codes: 0 success, 2 configuration or argument error, 3 numerical
failure (quadrature, Newton, factorisation), 4 integrand overflow, 5 a
decay bound was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .config import Method, build_problem, load_config
from .errors import ConfigError, DomainError, IllDefinedScheme, IntegrandOverflow, QmcisError
from .harness import _cell_key, run_convergence
from .isampling import MonteCarlo, check_assumptions, estimate, resolve_plan
from .lattice import GeneratingVector, cached_cbc, cbc_construct, make_pod_weights
from .models import GlmmInstance, RbInstance, glmm_condition, rb_alpha_bound
from .rkhs import WeightScheme, rate_certificate, theta_hat

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OVERFLOW, EXIT_BOUND = 0, 2, 3, 4, 5


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scheme_from_args(args):
    if args.lam is not None or args.nu is not None:
        if args.lam is None or args.nu is None:
            raise ConfigError("the rational weight needs both --lam and --nu")
        return WeightScheme.rational(args.lam, args.nu)
    return WeightScheme.gaussian(args.alpha2)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_cbc(args):
    if args.config:
        cfg = load_config(args.config)
        n = args.N or cfg.n_list[-1]
        d = args.d or build_problem(cfg).problem.dim
        weights = make_pod_weights(d, cfg.pod_kappa, cfg.pod_eta, cfg.pod_lambda)
        scheme = cfg.scheme
    else:
        if args.N is None or args.d is None:
            raise ConfigError("cbc needs --N and --d (or --config)")
        n, d = args.N, args.d
        weights = make_pod_weights(d, args.kappa, args.eta, args.lam_w)
        scheme = _scheme_from_args(args)
    gen = cbc_construct(n, d, weights, scheme)
    for s, err in enumerate(gen.errors_sq, 1):
        print(f"prefix {s}: z={gen.z[s - 1]} error_sq={err!r}", file=sys.stderr)
    _emit(gen.to_text(), args.out)
    return EXIT_OK


def _assumption_block(built, scheme, seed):
    """Generic checks plus the model-specific ones; errors are reported in-band."""
    report = {}
    if scheme.kind != "gaussian":
        report["generic"] = {"skipped": "checks are stated for the Gaussian weight"}
    else:
        try:
            plan = resolve_plan(built.problem, "lapis")
            report["generic"] = check_assumptions(built.problem, plan, scheme, seed=seed).as_dict()
        except QmcisError as exc:
            report["generic"] = {"error": f"{type(exc).__name__}: {exc}"}
    inst = built.instance
    try:
        if isinstance(inst, GlmmInstance) and scheme.kind == "gaussian":
            report["glmm_condition"] = glmm_condition(inst, scheme).as_dict()
        elif isinstance(inst, RbInstance) and inst.sigma > 0:
            report["rb_alpha_bound"] = rb_alpha_bound(inst).as_dict()
    except QmcisError as exc:
        report["model"] = {"error": f"{type(exc).__name__}: {exc}"}
    return report


def cmd_estimate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    built = build_problem(cfg)
    method = Method.parse(args.method) if args.method else cfg.methods[0]
    n = args.N or cfg.n_list[-1]
    d = built.problem.dim
    plan = resolve_plan(built.problem, method.proposal, method.nu, cfg.t_scale)
    if method.sampler == "rqmc":
        if args.vector:
            points = GeneratingVector.read(args.vector)
            if points.dim != d:
                raise ConfigError(f"vector file has dimension {points.dim}, problem has {d}")
        else:
            weights = make_pod_weights(d, cfg.pod_kappa, cfg.pod_eta, cfg.pod_lambda)
            points = cached_cbc(n, d, weights, cfg.scheme_for(method))
    else:
        points = MonteCarlo(n)
    try:
        res = estimate(built.problem, plan, points, cfg.shifts, cfg.seed, _cell_key(method, n))
    except IntegrandOverflow as exc:
        print(f"integrand overflow: {exc}. The growth assumption or the minimax eigenvalue "
              f"condition is probably violated for this proposal.", file=sys.stderr)
        return EXIT_OVERFLOW
    doc = {
        "problem": cfg.problem,
        "method": method.sampler,
        "proposal": method.proposal_label,
        "N": res.n_points,
        "R": res.n_shifts,
        "seed": res.seed,
        "value": res.value,
        "rmse": res.rmse,
        "per_shift": res.per_shift,
        "exact": built.exact,
        "assumptions": _assumption_block(built, cfg.scheme, cfg.seed),
    }
    _emit(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_convergence(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    report = run_convergence(cfg)
    paths = report.write(args.out or cfg.output_dir)
    for f in report.fits:
        print(f"{f.method:5s} {f.proposal:20s} slope={f.slope:+.3f} ({f.status})")
    print(f"wrote {paths['rows']}", file=sys.stderr)
    return EXIT_OK


def cmd_fourier_check(args):
    if args.config:
        scheme = load_config(args.config).scheme
    else:
        scheme = _scheme_from_args(args)
    cert = rate_certificate(scheme)
    chain = args.constant == "chain"
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["h", "theta_hat", "bound", "ratio"])
    worst = 0.0
    for h in range(1, args.h_max + 1):
        val = theta_hat(h, scheme)
        bound = float(cert.bound(h, chain))
        worst = max(worst, val / bound)
        out.writerow([h, repr(val), repr(bound), repr(val / bound)])
    _emit(buf.getvalue(), args.out)
    if worst > 1.0:
        print(f"decay bound violated: max ratio {worst:.4f} for {scheme.label()} "
              f"with the {args.constant} constant", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def cmd_assumptions(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    built = build_problem(cfg)
    doc = {"problem": cfg.problem, "scheme": cfg.scheme.label(),
           **_assumption_block(built, cfg.scheme, cfg.seed)}
    _emit(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="experiment config file (INI)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="output path (default: stdout, or the config's dir)")


def _scheme_args(p):
    p.add_argument("--alpha2", type=float, default=4.0, help="Gaussian weight parameter")
    p.add_argument("--lam", type=float, help="rational weight exponent (with --nu)")
    p.add_argument("--nu", type=float, help="Student t degrees of freedom (with --lam)")


def build_parser():
    parser = argparse.ArgumentParser(prog="qmcis", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cbc", help="construct a generating vector")
    _common(p)
    _scheme_args(p)
    p.add_argument("--N", type=int, help="number of points (power of two)")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--kappa", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=3.1)
    p.add_argument("--lambda", dest="lam_w", type=float, default=0.51)
    p.set_defaults(func=cmd_cbc)

    p = sub.add_parser("estimate", help="single estimate as JSON")
    _common(p)
    p.add_argument("--N", type=int, help="number of points (default: largest configured)")
    p.add_argument("--method", help="e.g. rqmc:lapis (default: first configured)")
    p.add_argument("--vector", help="generating vector file for rqmc")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("convergence", help="convergence study as CSV")
    _common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("fourier-check", help="Fourier coefficients against their bound")
    _common(p)
    _scheme_args(p)
    p.add_argument("--h-max", type=int, default=128)
    p.add_argument("--constant", choices=("closed", "chain"), default="closed",
                   help="closed-form constant or the constant kept through the bounding chain")
    p.set_defaults(func=cmd_fourier_check)

    p = sub.add_parser("assumptions", help="condition report as JSON")
    _common(p)
    p.set_defaults(func=cmd_assumptions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("estimate", "convergence", "assumptions") and not args.config:
        print(f"qmcis {args.command}: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError, IllDefinedScheme) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrandOverflow as exc:
        print(f"integrand overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except QmcisError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
