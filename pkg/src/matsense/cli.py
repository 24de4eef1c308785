"""Command-line front end.

Subcommands: gen (write an instance to disk), solve (run one method on a
stored instance), phase (success-probability sweep), bench (runtime
comparison), trace (single convergence run plus rate fit), check
(measurement-concentration diagnostics), sdp (trace-form semidefinite
bridge). Exit codes: 0 success, 1 usage error, 2 solver or numeric failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .baselines import AdmmConfig, AltMinConfig, SvpConfig
from .diagnostics import (check_a1, check_hessian_expectation,
                          check_mean_estimator, check_regularity)
from .errors import MatsenseError
from .gd import GdConfig
from .harness import (BenchConfig, TraceConfig, coerce_config,
                      grid_from_config, parse_config, parse_m_spec,
                      resolve_m, run_convergence_trace, run_method,
                      run_phase_transition, run_runtime_bench,
                      write_trace_csv)
from .measurement import generate_instance, load_instance, save_instance
from .rng import make_rng
from .sdp import load_sdp, solve_sdp

_CONFIG_TYPES = {
    "gd": GdConfig,
    "svp": SvpConfig,
    "admm": AdmmConfig,
    "altmin": AltMinConfig,
}

# CLI flag name -> config field, applied only to methods that have the field
_FLAG_FIELDS = (
    ("mu", "mu"),
    ("step", "step"),
    ("lam", "lam"),
    ("eta", "eta"),
    ("ridge", "ridge"),
    ("max_iters", "max_iters"),
    ("tol", "rel_err_tol"),
)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (overrides any config-file seed)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for phase trials")
    return p


def _usage(message):
    print("error: %s" % message, file=sys.stderr)
    return 1


def _seed(args, sections=None):
    if args.seed is not None:
        return args.seed
    if sections and "seed" in sections.get("experiment", {}):
        return int(sections["experiment"]["seed"])
    return 0


def _sections(args):
    if args.config is None:
        return {}
    return parse_config(args.config)


def _method_config(method, args, sections):
    """Config-file section for the method, overridden by CLI flags."""
    text = dict(sections.get(method, {}))
    fields = {f.name for f in dataclasses.fields(_CONFIG_TYPES[method])}
    for flag, field in _FLAG_FIELDS:
        value = getattr(args, flag, None)
        if value is not None and field in fields:
            text[field] = repr(value)
    if not text:
        return None
    return coerce_config(_CONFIG_TYPES[method], text)


def _out_dir(args):
    out = args.out if args.out is not None else "."
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_m_flag(text, n):
    return resolve_m(parse_m_spec(str(text))[0], n)


def _write_report(args, name, payload):
    print(payload)
    if args.out is not None:
        path = os.path.join(_out_dir(args), name)
        with open(path, "w") as fh:
            fh.write(payload + "\n")


def _cmd_gen(args):
    if args.out is None:
        return _usage("gen needs --out <dir> to store the instance")
    rng = make_rng(_seed(args), "gen", args.kind, args.n, args.r)
    m = _resolve_m_flag(args.m, args.n)
    instance = generate_instance(args.n, args.r, m, args.kind, rng,
                                 rho=args.rho)
    save_instance(instance, args.out)
    print("wrote instance kind=%s n=%d r=%d m=%d -> %s"
          % (args.kind, args.n, args.r, m, args.out))
    return 0


def _cmd_solve(args):
    sections = _sections(args)
    instance = load_instance(args.instance)
    if args.r is not None:
        r = args.r
    elif instance.truth is not None:
        r = instance.truth.Z.shape[1]
    else:
        return _usage("instance stores no truth; pass --r")
    config = _method_config(args.method, args, sections)
    result = run_method(args.method, instance, r, config)
    out = _out_dir(args)
    write_trace_csv(result.trace, os.path.join(out, "trace.csv"))
    with open(os.path.join(out, "xhat.f64"), "wb") as fh:
        fh.write(np.ascontiguousarray(result.X, dtype=np.float64).tobytes())
    last = result.trace[-1]
    print("method=%s termination=%s iterations=%d rel_err=%s seconds=%.3f"
          % (args.method, result.termination, result.iterations,
             repr(float(last[2])), float(last[4])))
    return 0


def _cmd_phase(args):
    if args.config is None:
        return _usage("phase needs --config <file>")
    sections = _sections(args)
    grid = grid_from_config(sections, seed=args.seed)
    out = _out_dir(args)
    cells = run_phase_transition(grid, os.path.join(out, "phase.csv"),
                                 threads=args.threads)
    print("wrote %d cells -> %s" % (len(cells), os.path.join(out, "phase.csv")))
    return 0


def _cmd_bench(args):
    sections = _sections(args)
    exp = sections.get("experiment", {})
    n = args.n if args.n is not None else int(exp.get("n", "0"))
    r = args.r if args.r is not None else int(exp.get("r", "0"))
    m_text = args.m if args.m is not None else exp.get("m")
    if n <= 0 or r <= 0 or m_text is None:
        return _usage("bench needs n, r and m (flags or [experiment] config)")
    kind = args.kind if args.kind is not None else exp.get("kind", "goe")
    rho = args.rho if args.rho is not None else (
        float(exp["rho"]) if "rho" in exp else None)
    methods_text = args.methods if args.methods is not None else \
        exp.get("methods", "gd,svp,admm")
    methods = tuple(p.strip() for p in methods_text.split(",") if p.strip())
    method_configs = {}
    for meth in methods:
        cfg = _method_config(meth, args, sections)
        if cfg is not None:
            method_configs[meth] = cfg
    config = BenchConfig(n=n, r=r, m=_resolve_m_flag(m_text, n), kind=kind,
                         rho=rho, seed=_seed(args, sections),
                         methods=methods, method_configs=method_configs)
    out = _out_dir(args)
    _curves, summary = run_runtime_bench(config, out_dir=out)
    with open(os.path.join(out, "bench_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    for meth in methods:
        s = summary[meth]
        print("%s: time_to_tol=%s best_rel_err=%s termination=%s"
              % (meth, s["time_to_tol"], s["best_rel_err"], s["termination"]))
    return 0


def _cmd_trace(args):
    sections = _sections(args)
    gd_text = dict(sections.get("gd", {}))
    if args.mu is not None:
        gd_text["mu"] = repr(args.mu)
    if args.max_iters is not None:
        gd_text["max_iters"] = str(args.max_iters)
    gd = coerce_config(GdConfig, gd_text) if gd_text else GdConfig(mu=0.5)
    config = TraceConfig(n=args.n, r=args.r,
                         m=_resolve_m_flag(args.m, args.n),
                         kind=args.kind, rho=args.rho,
                         seed=_seed(args, sections), gd=gd)
    result, rate = run_convergence_trace(config, out_dir=_out_dir(args))
    if rate is None:
        print("termination=%s iterations=%d rate=insufficient-data"
              % (result.termination, result.iterations))
    else:
        print("termination=%s iterations=%d slope=%r r_squared=%r"
              % (result.termination, result.iterations, rate.slope,
                 rate.r_squared))
    return 0


def _cmd_check(args):
    seed = _seed(args)
    rng = make_rng(seed, "check", args.statistic)
    if args.statistic == "mean":
        m_grid = [resolve_m(e, args.n) for e in parse_m_spec(args.m_grid)]
        report = check_mean_estimator(args.n, args.r, m_grid, args.trials,
                                      rng)
        _write_report(args, "check_mean.json", report.to_json())
        return 0
    if args.statistic == "a1":
        m = _resolve_m_flag(args.m, args.n)
        u = rng.standard_normal(args.n)
        u /= np.linalg.norm(u)
        dev = check_a1(args.n, m, args.delta, u, rng)
        payload = json.dumps({"statistic": "a1", "n": args.n, "m": m,
                              "deviation": dev, "threshold": args.delta},
                             indent=2)
        _write_report(args, "check_a1.json", payload)
        return 0
    if args.statistic == "hessian":
        m = _resolve_m_flag(args.m, args.n)
        x = rng.standard_normal(args.n)
        x /= np.linalg.norm(x)
        y = rng.standard_normal(args.n)
        y /= np.linalg.norm(y)
        dev = check_hessian_expectation(x, y, m, rng)
        payload = json.dumps({"statistic": "hessian", "n": args.n,
                              "m": m, "deviation": dev}, indent=2)
        _write_report(args, "check_hessian.json", payload)
        return 0
    # regularity: margin of the local curvature inequality at a point
    # perturbed off the planted factor
    if args.instance is not None:
        instance = load_instance(args.instance)
    else:
        m = _resolve_m_flag(args.m, args.n)
        instance = generate_instance(args.n, args.r, m, "goe",
                                     make_rng(seed, "check", "reg", "inst"))
    if instance.truth is None:
        return _usage("regularity check needs an instance with truth")
    truth = instance.truth
    scale = args.radius * float(np.sqrt(truth.sigma[-1]))
    G = rng.standard_normal(truth.Z.shape)
    Z = truth.Z + scale * G / np.linalg.norm(G)
    beta = args.beta if args.beta is not None else \
        513.0 * truth.kappa * instance.n
    margin = check_regularity(instance, Z, args.alpha, beta)
    payload = json.dumps({"statistic": "regularity", "n": instance.n,
                          "m": instance.m, "alpha": args.alpha, "beta": beta,
                          "radius": args.radius, "margin": margin},
                         indent=2)
    _write_report(args, "check_regularity.json", payload)
    return 0


def _cmd_sdp(args):
    problem = load_sdp(args.problem)
    solution = solve_sdp(problem, method=args.method, rank=args.r)
    if args.out is not None:
        out = _out_dir(args)
        with open(os.path.join(out, "xhat.f64"), "wb") as fh:
            fh.write(np.ascontiguousarray(solution.X,
                                          dtype=np.float64).tobytes())
        write_trace_csv(solution.solver_result.trace,
                        os.path.join(out, "trace.csv"))
    print("method=%s objective=%r termination=%s"
          % (args.method, solution.objective,
             solution.solver_result.termination))
    return 0


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="matsense",
        description="rank-constrained recovery from random quadratic"
                    " measurements: solvers, baselines and experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common],
                       help="generate a planted instance and store it")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--m", required=True,
                   help="measurement count, absolute or like '6n'")
    p.add_argument("--kind", choices=("goe", "bernoulli"), default="goe")
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", parents=[common],
                       help="run one solver on a stored instance")
    p.add_argument("--method", choices=("gd", "svp", "admm", "altmin"),
                   default="gd")
    p.add_argument("--instance", required=True, help="instance directory")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("phase", parents=[common],
                       help="success-probability sweep over m")
    p.set_defaults(func=_cmd_phase)

    p = sub.add_parser("bench", parents=[common],
                       help="time-vs-error comparison on one instance")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--m", default=None)
    p.add_argument("--kind", choices=("goe", "bernoulli"), default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--methods", default=None,
                   help="comma list from gd,svp,admm,altmin")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("trace", parents=[common],
                       help="single gradient run with a rate fit")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--m", default="1000")
    p.add_argument("--kind", choices=("goe", "bernoulli"), default="goe")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("check", parents=[common],
                       help="concentration and curvature diagnostics")
    p.add_argument("statistic",
                   choices=("mean", "a1", "hessian", "regularity"))
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--m", default="2000")
    p.add_argument("--m-grid", default="2n,4n,8n,16n", dest="m_grid")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=24.0)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--instance", default=None)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("sdp", parents=[common],
                       help="solve a trace-form problem via the bridge")
    p.add_argument("problem", help="problem file path")
    p.add_argument("--method", choices=("gd", "svp", "altmin"), default="gd")
    p.add_argument("--r", type=int, required=True)
    p.set_defaults(func=_cmd_sdp)

    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help; fold both
        # into the documented 0/1 contract
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except MatsenseError as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 2
    except ValueError as exc:
        # bad m grammar, malformed config or problem files: usage errors
        return _usage(str(exc))
    except OSError as exc:
        # missing instance dirs, unwritable output paths: usage-class errors
        print("io failure: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
