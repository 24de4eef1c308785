"""Experiment orchestration: phase-transition grids, runtime benches,
convergence traces, config parsing, and CSV emission.

All experiments are seeded through (master seed, experiment label, cell
coordinates, trial index) paths, so any single trial can be reproduced in
isolation and thread counts cannot change results.
"""

import concurrent.futures
import configparser
import dataclasses
import logging
import os

import numpy as np

from .baselines import (AdmmConfig, AltMinConfig, SvpConfig, solve_altmin,
                        solve_nuclear_admm, solve_svp)
from .diagnostics import estimate_rate
from .errors import InsufficientDataError, MatsenseError
from .gd import TRACE_COLUMNS, GdConfig, solve_gd
from .measurement import generate_instance
from .rng import make_rng

SUCCESS_TOL = 1e-5

logger = logging.getLogger(__name__)

_METHODS = ("gd", "svp", "admm", "altmin")

_CONFIG_TYPES = {
    "gd": GdConfig,
    "svp": SvpConfig,
    "admm": AdmmConfig,
    "altmin": AltMinConfig,
}


def _fmt(x):
    # repr round-trips float64 exactly; integers stay integers
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# CSV emission and parsing (each writer has a lossless reader)

def write_trace_csv(trace, path_or_file):
    """Write a solver trace with header iter,f,rel_err,dist,seconds."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in np.asarray(trace):
            fh.write("%d,%s,%s,%s,%s\n" % (int(row[0]), _fmt(row[1]),
                                           _fmt(row[2]), _fmt(row[3]),
                                           _fmt(row[4])))
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_file):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file) if own else path_or_file
    try:
        header = fh.readline().strip()
        if header != ",".join(TRACE_COLUMNS):
            raise ValueError("unexpected trace header %r" % header)
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    finally:
        if own:
            fh.close()
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(TRACE_COLUMNS))


@dataclasses.dataclass(frozen=True)
class PhaseCell:
    """Empirical recovery probability of one (method, n, r, m) cell."""

    method: str
    n: int
    r: int
    m: int
    successes: int
    trials: int

    @property
    def probability(self):
        return self.successes / self.trials


def write_phase_csv(cells, path_or_file):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write("method,n,r,m,successes,trials,probability\n")
        for c in cells:
            fh.write("%s,%d,%d,%d,%d,%d,%s\n" % (
                c.method, c.n, c.r, c.m, c.successes, c.trials,
                _fmt(c.probability)))
    finally:
        if own:
            fh.close()


def read_phase_csv(path_or_file):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file) if own else path_or_file
    try:
        header = fh.readline().strip()
        if header != "method,n,r,m,successes,trials,probability":
            raise ValueError("unexpected phase header %r" % header)
        cells = []
        for line in fh:
            if not line.strip():
                continue
            meth, n, r, m, suc, tri, _prob = line.strip().split(",")
            cells.append(PhaseCell(method=meth, n=int(n), r=int(r), m=int(m),
                                   successes=int(suc), trials=int(tri)))
    finally:
        if own:
            fh.close()
    return cells


def write_bench_csv(curves, path_or_file):
    """curves: list of (method, seconds, rel_err) points."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write("method,seconds,rel_err\n")
        for meth, sec, rel in curves:
            fh.write("%s,%s,%s\n" % (meth, _fmt(sec), _fmt(rel)))
    finally:
        if own:
            fh.close()


def read_bench_csv(path_or_file):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file) if own else path_or_file
    try:
        header = fh.readline().strip()
        if header != "method,seconds,rel_err":
            raise ValueError("unexpected bench header %r" % header)
        out = []
        for line in fh:
            if not line.strip():
                continue
            meth, sec, rel = line.strip().split(",")
            out.append((meth, float(sec), float(rel)))
    finally:
        if own:
            fh.close()
    return out


# ---------------------------------------------------------------------------
# Experiment grids

@dataclasses.dataclass
class ExperimentGrid:
    """A phase-transition sweep.

    m_spec entries are either absolute counts (int) or multiples of n
    (float tagged by the config grammar "1.5n"); resolve_m turns them into
    integer m per n. method_configs maps method name to its config object;
    missing methods get defaults.
    """

    n_values: list
    r_values: list
    m_spec: list
    kind: str = "goe"
    rho: float = None
    trials: int = 40
    seed: int = 0
    methods: tuple = ("gd",)
    method_configs: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for meth in self.methods:
            if meth not in _METHODS:
                raise ValueError("unknown method %r" % (meth,))
            for cfg in _attempts(self.method_configs.get(meth)):
                if cfg is not None and not isinstance(cfg, _CONFIG_TYPES[meth]):
                    raise ValueError("config for %r has type %s"
                                     % (meth, type(cfg).__name__))


def resolve_m(entry, n):
    """One m_spec entry to an integer measurement count for side n."""
    if isinstance(entry, str) and entry.endswith("n"):
        return int(round(float(entry[:-1]) * n))
    if isinstance(entry, float):
        return int(round(entry * n))
    return int(entry)


def parse_m_spec(text):
    """Parse the config grammar for m values.

    Comma-separated entries; each is an absolute integer ("120"), a
    multiple of n ("1.5n"), or an inclusive range of multiples
    ("0.5n:3n:0.25n", start:stop:step). Multiples stay symbolic (floats
    are multiples, ints absolute) until a concrete n is known.
    """
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            pieces = [p.strip() for p in part.split(":")]
            if len(pieces) != 3:
                raise ValueError("range spec needs start:stop:step, got %r" % part)
            if not all(p.endswith("n") for p in pieces):
                raise ValueError("range spec must use multiples of n, got %r" % part)
            start, stop, step = (float(p[:-1]) for p in pieces)
            count = int(round((stop - start) / step)) + 1
            out.extend(start + i * step for i in range(count))
        elif part.endswith("n"):
            out.append(float(part[:-1]))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty m specification")
    return out


def _solver_rank(method, config, r):
    if method in ("svp", "altmin"):
        return dataclasses.replace(config, r=r)
    return config


def _attempts(cfg):
    """A config entry may be one config or an ordered sequence of fallbacks."""
    if isinstance(cfg, (tuple, list)):
        return tuple(cfg)
    return (cfg,)


# step-scale fallback ladder for gradient descent in phase sweeps: try the
# aggressive step first, back off when the iteration cycles instead of
# converging (small instances near the sample-complexity boundary tolerate
# smaller steps than large well-conditioned ones)
PHASE_GD_LADDER = (0.8, 0.5, 0.3, 0.2)


def run_method(method, instance, r, config=None):
    """Dispatch one solver run; config defaults to the method's defaults."""
    if config is None:
        config = _CONFIG_TYPES[method]()
    if method == "gd":
        return solve_gd(instance, r, config)
    if method == "svp":
        return solve_svp(instance, _solver_rank(method, config, r))
    if method == "altmin":
        return solve_altmin(instance, _solver_rank(method, config, r))
    if method == "admm":
        return solve_nuclear_admm(instance, config)
    raise ValueError("unknown method %r" % (method,))


# per-attempt iteration budget in phase sweeps: bounded so that curves take
# minutes, not hours; runs that need more iterations than this near the
# sample-complexity boundary count as failures under the budget
PHASE_GD_BUDGET = 1200
PHASE_ADMM_BUDGET = 2500


def _default_phase_config(method):
    if method == "gd":
        return tuple(GdConfig(mu=mu, max_iters=PHASE_GD_BUDGET)
                     for mu in PHASE_GD_LADDER)
    if method == "admm":
        return AdmmConfig(max_iters=PHASE_ADMM_BUDGET)
    return None


def _phase_trial(grid, n, r, m, trial):
    rng = make_rng(grid.seed, "phase", n, r, m, trial)
    instance = generate_instance(n, r, m, grid.kind, rng, rho=grid.rho)
    Xstar = instance.truth.X
    norm = np.linalg.norm(Xstar)
    outcome = {}
    for method in grid.methods:
        cfg = grid.method_configs.get(method)
        if cfg is None:
            cfg = _default_phase_config(method)
        ok = False
        for attempt in _attempts(cfg):
            try:
                result = run_method(method, instance, r, attempt)
                rel = float(np.linalg.norm(result.X - Xstar)) / norm
                ok = rel < SUCCESS_TOL
            except MatsenseError as exc:
                logger.warning("trial failed: method=%s n=%d r=%d m=%d"
                               " trial=%d reason=%s", method, n, r, m,
                               trial, exc)
            if ok:
                break
        outcome[method] = ok
    return outcome


def run_phase_transition(grid, csv_path=None, threads=1):
    """Monte-Carlo success probabilities over the grid.

    Per trial, one fresh instance (sub-seeded by cell coordinates and trial
    index) is shared by all methods; success means final relative Frobenius
    error below 1e-5 against the stored truth. A method whose config entry
    is a sequence gets each config tried in order until one succeeds (for
    gd the default is the PHASE_GD_LADDER step scales, largest first, the
    standard per-instance step selection for this family of schemes).
    Solver errors count as failures and the sweep continues. Returns cells
    ordered by (n, r, m, method); trials may run in a thread pool without
    changing any count.
    """
    cells = []
    for n in grid.n_values:
        for r in grid.r_values:
            for entry in grid.m_spec:
                m = resolve_m(entry, n)
                tasks = list(range(grid.trials))
                if threads > 1:
                    with concurrent.futures.ThreadPoolExecutor(threads) as pool:
                        outcomes = list(pool.map(
                            lambda t: _phase_trial(grid, n, r, m, t), tasks))
                else:
                    outcomes = [_phase_trial(grid, n, r, m, t) for t in tasks]
                for method in grid.methods:
                    wins = sum(1 for o in outcomes if o[method])
                    cells.append(PhaseCell(method=method, n=n, r=r, m=m,
                                           successes=wins, trials=grid.trials))
    if csv_path is not None:
        write_phase_csv(cells, csv_path)
    return cells


def crossing_m(cells, method, n, r, level=0.5):
    """Interpolated m at which the success probability first reaches level.

    Linear interpolation between the last cell below and the first cell at
    or above the level; returns inf when the curve never reaches it.
    """
    pts = sorted((c.m, c.probability) for c in cells
                 if c.method == method and c.n == n and c.r == r)
    if not pts:
        raise ValueError("no cells for %s n=%d r=%d" % (method, n, r))
    prev_m, prev_p = None, None
    for m, p in pts:
        if p >= level:
            if prev_m is None or p == prev_p:
                return float(m)
            return prev_m + (level - prev_p) * (m - prev_m) / (p - prev_p)
        prev_m, prev_p = m, p
    return float("inf")


# ---------------------------------------------------------------------------
# Runtime bench and convergence trace

@dataclasses.dataclass
class BenchConfig:
    """One runtime-comparison scenario (a single shared instance)."""

    n: int
    r: int
    m: int
    kind: str = "goe"
    rho: float = None
    seed: int = 0
    methods: tuple = ("gd", "svp", "admm")
    method_configs: dict = dataclasses.field(default_factory=dict)
    tol: float = SUCCESS_TOL


def time_to_tolerance(trace, tol):
    """First cumulative seconds at which rel_err drops below tol, or None."""
    trace = np.asarray(trace)
    hit = np.nonzero(trace[:, 2] < tol)[0]
    if hit.size == 0:
        return None
    return float(trace[hit[0], 4])


def _default_bench_config(method, kind):
    # sparse scenarios take a larger gradient step and SVP step than the
    # dense ones; solver defaults already carry the dense selections
    if kind == "bernoulli":
        if method == "gd":
            return GdConfig(mu=1.0)
        if method == "svp":
            return SvpConfig(step=1e-3)
    return None


def run_runtime_bench(config, out_dir=None):
    """Run each method on one shared instance and collect time-error curves.

    Methods run sequentially (never in a pool) so wall times are honest.
    Unconfigured methods get kind-dependent defaults (Bernoulli scenarios
    switch gd to mu=1.0 and SVP to step 1e-3). Returns (curves, summary):
    curves is a list of (method, seconds, rel_err) trace points, summary
    maps method to time_to_tol (None when the method never reached it),
    best_rel_err, termination, and total seconds.
    """
    rng = make_rng(config.seed, "bench", config.kind, config.n, config.r,
                   config.m)
    instance = generate_instance(config.n, config.r, config.m, config.kind,
                                 rng, rho=config.rho)
    curves = []
    summary = {}
    for method in config.methods:
        cfg = config.method_configs.get(method)
        if cfg is None:
            cfg = _default_bench_config(method, config.kind)
        result = run_method(method, instance, config.r, cfg)
        for row in result.trace:
            curves.append((method, float(row[4]), float(row[2])))
        rels = result.trace[:, 2]
        finite = rels[np.isfinite(rels)]
        summary[method] = {
            "time_to_tol": time_to_tolerance(result.trace, config.tol),
            "best_rel_err": float(finite.min()) if finite.size else None,
            "termination": result.termination,
            "seconds": float(result.trace[-1, 4]),
            "iterations": result.iterations,
        }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_bench_csv(curves, os.path.join(out_dir, "bench.csv"))
    return curves, summary


@dataclasses.dataclass
class TraceConfig:
    """Convergence-trace scenario (single gd run plus a rate fit)."""

    n: int = 200
    r: int = 2
    m: int = 1000
    kind: str = "goe"
    rho: float = None
    seed: int = 0
    gd: GdConfig = dataclasses.field(default_factory=lambda: GdConfig(mu=0.5))


def run_convergence_trace(config, out_dir=None):
    """Run the gradient solver once and fit its convergence rate.

    Returns (result, rate) where rate is a RateEstimate, or None when the
    trace has too few usable points (reported, not raised). Writes
    trace.csv and rate.json under out_dir when given.
    """
    rng = make_rng(config.seed, "trace", config.kind, config.n, config.r,
                   config.m)
    instance = generate_instance(config.n, config.r, config.m, config.kind,
                                 rng, rho=config.rho)
    result = solve_gd(instance, config.r, config.gd)
    try:
        rate = estimate_rate(result.trace)
    except InsufficientDataError:
        rate = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trace_csv(result.trace, os.path.join(out_dir, "trace.csv"))
        with open(os.path.join(out_dir, "rate.json"), "w") as fh:
            if rate is None:
                fh.write('{"error": "insufficient data"}\n')
            else:
                fh.write('{"slope": %r, "r_squared": %r, "degenerate": %s}\n'
                         % (rate.slope, rate.r_squared,
                            "true" if rate.degenerate else "false"))
    return result, rate


# ---------------------------------------------------------------------------
# Config files

def parse_config(path):
    """Read a flat key = value config with per-method sections.

    Returns {section: {key: string}}; values stay strings, consumers
    coerce. Section names: experiment plus method names.
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    return {sect: dict(cp[sect]) for sect in cp.sections()}


def coerce_config(cls, overrides):
    """Build a method config dataclass from string key/value overrides."""
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in overrides.items():
        if key not in fields:
            raise ValueError("%s has no field %r" % (cls.__name__, key))
        current = fields[key]
        if current.type in ("int", int):
            kwargs[key] = int(float(value))
        else:
            kwargs[key] = float(value)
    return cls(**kwargs)


def _split_list(text):
    return [p.strip() for p in str(text).split(",") if p.strip()]


def grid_from_config(sections, seed=None):
    """Build an ExperimentGrid from parsed config sections.

    In the [gd] section, mu may be a comma list ("0.8, 0.5, 0.3"); the
    phase runner then tries those step scales in order per trial.
    """
    exp = sections.get("experiment", {})
    methods = tuple(_split_list(exp.get("methods", "gd")))
    method_configs = {}
    for meth in methods:
        if meth not in sections:
            continue
        text = dict(sections[meth])
        if meth == "gd" and "," in text.get("mu", ""):
            mus = [float(v) for v in _split_list(text.pop("mu"))]
            base = coerce_config(GdConfig, text)
            method_configs[meth] = tuple(
                dataclasses.replace(base, mu=mu) for mu in mus)
        else:
            method_configs[meth] = coerce_config(_CONFIG_TYPES[meth], text)
    grid = ExperimentGrid(
        n_values=[int(v) for v in _split_list(exp.get("n", "60"))],
        r_values=[int(v) for v in _split_list(exp.get("r", "1"))],
        m_spec=parse_m_spec(exp.get("m", "0.5n:3n:0.25n")),
        kind=exp.get("kind", "goe"),
        rho=float(exp["rho"]) if "rho" in exp else None,
        trials=int(exp.get("trials", "40")),
        seed=int(exp.get("seed", "0")) if seed is None else seed,
        methods=methods,
        method_configs=method_configs,
    )
    return grid
