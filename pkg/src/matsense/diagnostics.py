"""Monte-Carlo diagnostics for the probabilistic claims behind the solver.

Each check draws fresh randomness, measures a deviation from an analytic
expectation, and reports raw numbers; thresholds are left to callers (the
analysis constants are not sharp, so nothing here hard-codes them).
"""

import dataclasses
import json

import numpy as np

from .errors import InsufficientDataError
from .gd import gradient
from .linalg import operator_norm, procrustes_align, top_r_eigenpairs
from .measurement import generate_instance, sample_goe_batch

# matrices per block when accumulating long Monte-Carlo sums
_CHUNK = 1024


@dataclasses.dataclass
class ConcentrationReport:
    """Deviation summary for one diagnostic.

    deviations holds per-trial values (a list of per-m lists when the check
    sweeps a measurement grid, in which case m is that grid and means/slope
    summarize the sweep). All deviations are nonnegative.
    """

    statistic: str
    n: int
    m: object
    r: int
    trials: int
    deviations: object
    median: float
    max: float
    means: object = None
    slope: float = None

    def to_json(self, indent=1):
        return json.dumps(dataclasses.asdict(self), indent=indent)


def mean_deviation(M, Xstar):
    """Relative error ||M/2 - X*||_F / ||X*||_F of the surrogate mean."""
    return float(np.linalg.norm(0.5 * M - Xstar) / np.linalg.norm(Xstar))


def check_mean_estimator(n, r, m_grid, trials, rng):
    """Monte-Carlo check that M = (1/m) sum b_i A_i concentrates at 2 X*.

    For each m in the grid, draws fresh planted instances and measures
    mean_deviation; the report's slope is the least-squares slope of
    log(mean deviation) against log(m), which should sit near -1/2.
    """
    m_grid = list(m_grid)
    if not m_grid:
        raise ValueError("m_grid must be nonempty")
    devs = []
    for m in m_grid:
        row = []
        for _ in range(trials):
            inst = generate_instance(n, r, int(m), "goe", rng)
            M = inst.ensemble.apply_adjoint(inst.b) / inst.m
            row.append(mean_deviation(M, inst.truth.X))
        devs.append(row)
    means = [float(np.mean(row)) for row in devs]
    slope = float(np.polyfit(np.log(m_grid), np.log(means), 1)[0])
    flat = np.asarray(devs).ravel()
    return ConcentrationReport(
        statistic="mean-estimator", n=n, m=m_grid, r=r, trials=trials,
        deviations=devs, median=float(np.median(flat)), max=float(flat.max()),
        means=means, slope=slope)


def check_a1(n, m, delta_over_r, u, rng):
    """Deviation of the quadratic-form average around a direction u.

    Returns ||(1/m) sum (u^T A_i u) A_i - 2 u u^T|| in operator norm (the
    deviation matrix is symmetric, so this is its largest |eigenvalue|).
    delta_over_r is the threshold the caller intends to compare against; it
    is not applied here.
    """
    u = np.asarray(u, dtype=np.float64)
    acc = np.zeros((n, n))
    left = m
    while left > 0:
        take = min(left, _CHUNK)
        A = sample_goe_batch(n, take, rng)
        t = A @ u
        quad = t @ u
        acc += np.tensordot(quad, A, axes=(0, 0))
        left -= take
    D = acc / m - 2.0 * np.outer(u, u)
    return float(abs(top_r_eigenpairs(D, 1).values[0]))


def check_hessian_expectation(x, y, m, rng):
    """Deviation of (1/m) sum A_i x y^T A_i from x^T y I + y x^T.

    Operator norm of the (generally asymmetric) deviation matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    acc = np.zeros((n, n))
    left = m
    while left > 0:
        take = min(left, _CHUNK)
        A = sample_goe_batch(n, take, rng)
        P = A @ x
        Q = A @ y
        acc += P.T @ Q
        left -= take
    D = acc / m - (float(x @ y) * np.eye(n) + np.outer(y, x))
    return operator_norm(D)


def check_regularity(instance, Z, alpha, beta):
    """Margin of the local regularity inequality at Z.

    Computes <grad f(Z), Z - Zbar> - (sigma_r/alpha) ||Z - Zbar||_F^2
    - ||grad f(Z)||_F^2 / (beta ||Z*||_F^2), where Zbar is the orbit point
    of the truth closest to Z. Positive margin means the condition holds.
    """
    if instance.truth is None:
        raise ValueError("check_regularity needs an instance with truth")
    truth = instance.truth
    g = gradient(Z, instance)
    align = procrustes_align(Z, truth.Z)
    H = Z - truth.Z @ align.U
    sigma_r = float(truth.sigma[-1])
    zstar_sq = float(np.sum(truth.sigma))
    lhs = float(np.sum(g * H))
    rhs = (sigma_r / alpha) * float(np.sum(H * H)) \
        + float(np.sum(g * g)) / (beta * zstar_sq)
    return lhs - rhs


@dataclasses.dataclass(frozen=True)
class RateEstimate:
    """Linear-convergence fit; degenerate marks a flat (constant) input."""

    slope: float
    r_squared: float
    degenerate: bool = False


def estimate_rate(trace):
    """Fit log10(dist) against iteration over the middle 80% of a trace.

    trace is a SolveResult trace array; rows with nonpositive or non-finite
    distances are dropped first. Needs at least 20 usable points. A constant
    distance sequence yields slope 0, R^2 0, degenerate=True.
    """
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim != 2 or trace.shape[1] < 4:
        raise ValueError("expected a trace with TRACE_COLUMNS layout")
    keep = np.isfinite(trace[:, 3]) & (trace[:, 3] > 0)
    pts = trace[keep]
    if pts.shape[0] < 20:
        raise InsufficientDataError(
            "need >= 20 trace points with positive distance, have %d"
            % pts.shape[0])
    lo = int(np.floor(0.1 * pts.shape[0]))
    hi = int(np.ceil(0.9 * pts.shape[0]))
    k = pts[lo:hi, 0]
    y = np.log10(pts[lo:hi, 3])
    if np.ptp(y) == 0.0:
        return RateEstimate(slope=0.0, r_squared=0.0, degenerate=True)
    slope, intercept = np.polyfit(k, y, 1)
    pred = slope * k + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return RateEstimate(slope=float(slope), r_squared=1.0 - ss_res / ss_tot,
                        degenerate=False)
