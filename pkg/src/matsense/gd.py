"""Factored gradient descent for PSD affine rank minimization.

Minimizes f(Z) = (1/4m) sum_i (trace(Z^T A_i Z) - b_i)^2 over n x r factors,
with the spectral initialization and constant step rule

    Z0 columns  z_s = sqrt(|l_s|/2) v_s,   (l_s, v_s) top eigenpairs of
                M = (1/m) sum_i b_i A_i,
    step        mu / (sum_s |l_s| / 2),

so the step scale is set once from the initialization and never tuned per
iteration.
"""

import dataclasses
import time

import numpy as np

from .errors import NumericError
from .linalg import factor_distance, top_r_eigenpairs
from .measurement import apply_adjoint

TRACE_COLUMNS = ("iter", "f", "rel_err", "dist", "seconds")

TERMINATIONS = ("converged", "max-iters", "stalled", "diverged", "ill-conditioned")

# objective blowup factor that counts as divergence
_DIVERGE_FACTOR = 1e6

# stall window length in iterations
_STALL_WINDOW = 100


@dataclasses.dataclass
class GdConfig:
    """Gradient descent settings.

    mu is the dimensionless step scale (the effective step is
    mu / (sum_s |l_s|/2) from the initialization spectrum). Iterations stop
    on convergence (relative error against the truth below rel_err_tol when
    the truth is known, relative residual otherwise), on max_iters, when the
    best objective improves by less than stall_tol over a 100-iteration
    window, or on objective blowup.
    """

    mu: float = 0.8
    max_iters: int = 100000
    rel_err_tol: float = 1e-5
    stall_tol: float = 1e-12
    trace_dense_limit: int = 10000
    trace_stride: int = 10


@dataclasses.dataclass
class SolveResult:
    """Outcome of a solver run.

    X is the final n x n estimate, Z the final factor for factored methods
    (None otherwise). trace has one row per recorded iteration with columns
    TRACE_COLUMNS; rel_err and dist are NaN when the truth (or, for dist, a
    factor) is unavailable. termination is one of TERMINATIONS.
    """

    X: np.ndarray
    Z: np.ndarray
    trace: np.ndarray
    termination: str
    iterations: int
    aux: dict = dataclasses.field(default_factory=dict)


class IterationTracker:
    """Shared trace recording and termination tests for all solvers.

    Records (iter, f, rel_err, dist, seconds) rows, densely up to
    trace_dense_limit and every trace_stride-th iteration after that (the
    terminal row is always recorded). Termination taxonomy:

    * converged, rel_err < rel_err_tol (truth known) or relative residual
      < rel_err_tol (truth unknown)
    * diverged, non-finite objective or f > 1e6 * f(start)
    * stalled, best objective improved by < stall_tol over the last 100
      iterations (for monotone descent this is the plain objective decrease)
    * max-iters

    monotone_violations counts recorded rows whose objective exceeds the
    previously recorded one, so descent failures are visible per run.
    """

    def __init__(self, instance, config):
        self.instance = instance
        self.config = config
        self.t0 = time.perf_counter()
        self.rows = []
        self.prefix_min = []
        self.b_norm = max(float(np.linalg.norm(instance.b)), 1e-300)
        truth = instance.truth
        self.Xstar = None if truth is None else truth.X
        self.Zstar = None if truth is None else truth.Z
        self.Xstar_norm = (None if truth is None
                           else max(float(np.linalg.norm(self.Xstar)), 1e-300))
        if truth is not None:
            gram_star = truth.Z.T @ truth.Z
            self._gram_star_sq = float(np.sum(gram_star * gram_star))
        self.f0 = None
        self._last_f = None
        self.monotone_violations = 0

    def rel_err_dense(self, X_hat):
        if self.Xstar is None:
            return np.nan
        return float(np.linalg.norm(X_hat - self.Xstar)) / self.Xstar_norm

    def rel_err_factored(self, Z):
        # ||ZZ' - X*||_F^2 from r x r Grams, avoids any n^2 work
        if self.Xstar is None:
            return np.nan
        gram = Z.T @ Z
        cross = Z.T @ self.Zstar
        sq = (float(np.sum(gram * gram)) - 2.0 * float(np.sum(cross * cross))
              + self._gram_star_sq)
        return float(np.sqrt(max(sq, 0.0))) / self.Xstar_norm

    def dist(self, Z):
        if self.Zstar is None or Z is None or Z.shape != self.Zstar.shape:
            return np.nan
        return factor_distance(Z, self.Zstar)

    def _record(self, k, f, rel_err, dist):
        self.rows.append((float(k), float(f), float(rel_err), float(dist),
                          time.perf_counter() - self.t0))
        if self._last_f is not None and np.isfinite(f) and f > self._last_f:
            self.monotone_violations += 1
        if np.isfinite(f):
            self._last_f = f

    def step(self, k, f, rel_err, dist, resid_norm=None):
        """Record iteration k and return a termination reason or None."""
        cfg = self.config
        if self.f0 is None:
            self.f0 = f if np.isfinite(f) else 1.0
        best = self.prefix_min[-1] if self.prefix_min else np.inf
        self.prefix_min.append(min(best, f) if np.isfinite(f) else best)

        on_grid = k <= cfg.trace_dense_limit or k % cfg.trace_stride == 0
        if on_grid:
            self._record(k, f, rel_err, dist)

        reason = None
        if self.Xstar is not None:
            if np.isfinite(rel_err) and rel_err < cfg.rel_err_tol:
                reason = "converged"
        elif resid_norm is not None and resid_norm / self.b_norm < cfg.rel_err_tol:
            reason = "converged"
        if reason is None:
            if not np.isfinite(f) or f > _DIVERGE_FACTOR * max(self.f0, 1e-300):
                reason = "diverged"
            elif (k >= _STALL_WINDOW
                  and self.prefix_min[k - _STALL_WINDOW] - self.prefix_min[k]
                  < cfg.stall_tol):
                reason = "stalled"
            elif k >= cfg.max_iters:
                reason = "max-iters"
        if reason is not None and not on_grid:
            self._record(k, f, rel_err, dist)
        return reason

    def finish(self, reason, k):
        trace = np.asarray(self.rows, dtype=np.float64).reshape(-1, 5)
        return trace, reason, k


def residuals(Z, instance):
    """Measurement residuals A(Z Z^T) - b.

    The sparse path accumulates trace(Z^T A_i Z) from the stored nonzeros
    (sum of Z[j,:].Z[k,:] over entries (j,k) of A_i) and never forms Z Z^T.
    """
    ens = instance.ensemble
    if ens.is_sparse:
        mat_idx, rows, cols, vals = ens.triplets
        per_nz = vals * np.einsum("ij,ij->i", Z[rows], Z[cols])
        quad = np.bincount(mat_idx, weights=per_nz, minlength=ens.m)
        return quad - instance.b
    X = Z @ Z.T
    return ens.design @ X.reshape(-1) - instance.b


def objective(Z, instance):
    """f(Z) = (1/(4m)) ||A(Z Z^T) - b||^2."""
    w = residuals(Z, instance)
    return float(w @ w) / (4.0 * instance.m)


def gradient(Z, instance):
    """Exact gradient (1/m) sum_i w_i ((A_i + A_i^T)/2) Z, w = A(ZZ^T) - b.

    The symmetrized action makes the formula the exact gradient of
    trace(Z^T A_i Z) for asymmetric (Bernoulli) measurement matrices as
    well; for symmetric ensembles it reduces to (1/m) sum_i w_i A_i Z.
    """
    w = residuals(Z, instance)
    S = apply_adjoint(instance.ensemble, w)
    S = 0.5 * (S + S.T)
    return (S @ Z) / instance.m


def mean_estimate(instance):
    """M = (1/m) sum_i b_i A_i, the surrogate whose top eigenspace seeds Z0."""
    return apply_adjoint(instance.ensemble, instance.b) / instance.m


def init_from_mean(M, r):
    """Factor the surrogate mean: columns sqrt(|l_s|/2) v_s.

    Returns (Z0, EigenPairs). Exposed separately from
    :func:`spectral_init` so exact-expectation inputs (M = 2 X*) can be
    injected in tests and diagnostics.
    """
    pairs = top_r_eigenpairs(M, r)
    scale = np.sqrt(np.abs(pairs.values) / 2.0)
    return pairs.vectors * scale, pairs


def spectral_init(instance, r):
    """Spectral initialization from the instance's measurements."""
    return init_from_mean(mean_estimate(instance), r)


def solve_gd(instance, r, config=None):
    """Run factored gradient descent at rank r.

    Parameters
    ----------
    instance : Instance
    r : int
        Factor width.
    config : GdConfig, optional

    Returns
    -------
    SolveResult
        aux carries the init eigenvalues ("init_values"), the step scale
        denominator ("denom", sum_s |l_s|/2), the effective step, and the
        count of recorded objective increases ("monotone_violations").
    """
    if config is None:
        config = GdConfig()
    tracker = IterationTracker(instance, config)
    ens = instance.ensemble
    m = instance.m

    Z, pairs = spectral_init(instance, r)
    denom = float(np.sum(np.abs(pairs.values))) / 2.0
    if denom <= 0.0:
        raise NumericError("spectral initialization is zero; cannot scale step")
    step = config.mu / denom

    dense = not ens.is_sparse
    design = ens.design if dense else None
    b = instance.b

    k = 0
    while True:
        if dense:
            X_hat = Z @ Z.T
            w = design @ X_hat.reshape(-1) - b
            rel = tracker.rel_err_dense(X_hat)
        else:
            w = residuals(Z, instance)
            rel = tracker.rel_err_factored(Z)
        f = float(w @ w) / (4.0 * m)
        reason = tracker.step(k, f, rel, tracker.dist(Z), np.linalg.norm(w))
        if reason is not None:
            break
        S = ens.apply_adjoint(w)
        S = 0.5 * (S + S.T)
        Z = Z - (step / m) * (S @ Z)
        k += 1

    trace, reason, k = tracker.finish(reason, k)
    return SolveResult(
        X=Z @ Z.T, Z=Z, trace=trace, termination=reason, iterations=k,
        aux={"init_values": pairs.values, "denom": denom, "step": step,
             "monotone_violations": tracker.monotone_violations},
    )


def solve_gd_auto_rank(instance, config=None, max_rank=None, residual_tol=None):
    """Rank continuation: solve at rank 1, 2, ... until the residual is small.

    Each new start keeps the previous final factor's columns and appends the
    next spectral column. Stops when the relative residual drops below
    residual_tol (default: config.rel_err_tol) or max_rank is reached.

    Returns
    -------
    (SolveResult, int)
        The accepted result and its rank.
    """
    if config is None:
        config = GdConfig()
    if max_rank is None:
        max_rank = min(instance.n, 10)
    if residual_tol is None:
        residual_tol = config.rel_err_tol
    M = mean_estimate(instance)
    Z_cols, pairs = init_from_mean(M, max_rank)
    b_norm = max(float(np.linalg.norm(instance.b)), 1e-300)

    prev = None
    result = None
    for r in range(1, max_rank + 1):
        if prev is None:
            result = solve_gd(instance, r, config)
        else:
            Z0 = np.column_stack([prev, Z_cols[:, r - 1]])
            result = _solve_gd_from(instance, Z0, pairs.values[:r], config)
        prev = result.Z
        w = residuals(result.Z, instance)
        if float(np.linalg.norm(w)) / b_norm < residual_tol:
            return result, r
    return result, max_rank


def _solve_gd_from(instance, Z0, init_values, config):
    # same loop as solve_gd but from a given starting factor; used by the
    # rank continuation wrapper
    tracker = IterationTracker(instance, config)
    ens = instance.ensemble
    m = instance.m
    denom = float(np.sum(np.abs(init_values))) / 2.0
    if denom <= 0.0:
        raise NumericError("zero step denominator")
    step = config.mu / denom
    Z = Z0
    truth_matches = (instance.truth is not None
                     and instance.truth.Z.shape[1] == Z0.shape[1])

    k = 0
    while True:
        w = residuals(Z, instance)
        f = float(w @ w) / (4.0 * m)
        rel = tracker.rel_err_factored(Z) if truth_matches else np.nan
        dist = tracker.dist(Z) if truth_matches else np.nan
        reason = tracker.step(k, f, rel, dist, np.linalg.norm(w))
        if reason is not None:
            break
        S = ens.apply_adjoint(w)
        S = 0.5 * (S + S.T)
        Z = Z - (step / m) * (S @ Z)
        k += 1

    trace, reason, k = tracker.finish(reason, k)
    return SolveResult(X=Z @ Z.T, Z=Z, trace=trace, termination=reason,
                       iterations=k,
                       aux={"init_values": np.asarray(init_values),
                            "denom": denom, "step": step,
                            "monotone_violations": tracker.monotone_violations})
