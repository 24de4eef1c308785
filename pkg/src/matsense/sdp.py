"""Bridge from trace-objective SDPs to rank minimization.

Problems of the form

    min trace(C X)  s.t.  <A~_i, X> = b_i,  X psd

with positive definite C reduce, through the congruence X ~ L^T X L with
C = L L^T, to finding the minimum-rank psd matrix satisfying transformed
constraints. The reduced instance can be handed to any solver in this
package and the solution lifted back.
"""

import dataclasses

import numpy as np
import scipy.linalg

from .baselines import (AdmmConfig, AltMinConfig, SvpConfig,
                        solve_altmin, solve_nuclear_admm, solve_svp)
from .errors import IndefiniteCostError
from .gd import GdConfig, solve_gd
from .measurement import Instance, MeasurementEnsemble

_SYM_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class SdpProblem:
    """Cost matrix C, constraint matrices, and right-hand side."""

    C: np.ndarray
    constraints: list
    b: np.ndarray

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def m(self):
        return len(self.constraints)


@dataclasses.dataclass(frozen=True)
class SdpSolution:
    """Lifted primal estimate, its objective trace(C X), solver details."""

    X: np.ndarray
    objective: float
    solver_result: object


def _check_symmetric(M, name):
    dev = np.max(np.abs(M - M.T))
    scale = max(np.max(np.abs(M)), 1.0)
    if dev > _SYM_TOL * scale:
        raise ValueError("%s is not symmetric (max asymmetry %g)" % (name, dev))


def cost_cholesky(C):
    """Lower Cholesky factor of the cost matrix.

    Raises IndefiniteCostError naming the smallest eigenvalue when C is not
    positive definite.
    """
    C = np.asarray(C, dtype=np.float64)
    _check_symmetric(C, "cost matrix")
    vals = np.linalg.eigvalsh(0.5 * (C + C.T))
    if vals[0] <= 0.0:
        raise IndefiniteCostError(float(vals[0]))
    return np.linalg.cholesky(0.5 * (C + C.T))


def reduce_sdp(problem):
    """Transform constraints into the factored-recovery coordinate system.

    With C = L L^T, each constraint matrix A~_i maps to the symmetrized
    L^{-1} A~_i L^{-T}, so that <A~_i, X> = <A_i, L^T X L> and the psd cost
    trace(C X) becomes trace(L^T X L).

    Returns
    -------
    (matrices, L)
        matrices is the (m, n, n) stack of transformed constraint matrices.
    """
    L = cost_cholesky(problem.C)
    n = problem.n
    out = np.empty((problem.m, n, n))
    for i, A in enumerate(problem.constraints):
        A = np.asarray(A, dtype=np.float64)
        _check_symmetric(A, "constraint %d" % i)
        # L^{-1} A L^{-T} via two triangular solves
        W = scipy.linalg.solve_triangular(L, A, lower=True)
        B = scipy.linalg.solve_triangular(L, W.T, lower=True).T
        out[i] = 0.5 * (B + B.T)
    return out, L


def lift_solution(X, L):
    """Map a reduced-space estimate back: X~ = L^{-T} X L^{-1}."""
    X = np.asarray(X, dtype=np.float64)
    W = scipy.linalg.solve_triangular(L, X.T, trans="T", lower=True)
    Y = scipy.linalg.solve_triangular(L, W.T, trans="T", lower=True)
    return Y


def reduced_instance(problem):
    """Build the sensing instance solvers consume (no truth attached)."""
    mats, L = reduce_sdp(problem)
    ensemble = MeasurementEnsemble.from_matrices(mats, kind="dense")
    return Instance(ensemble=ensemble, b=np.asarray(problem.b, dtype=np.float64),
                    truth=None), L


_DEFAULT_CONFIGS = {
    "gd": GdConfig,
    "svp": SvpConfig,
    "admm": AdmmConfig,
    "altmin": AltMinConfig,
}


def solve_sdp(problem, method="gd", config=None, rank=None):
    """Reduce, solve with the chosen method, and lift the result.

    Parameters
    ----------
    problem : SdpProblem
    method : str
        "gd", "svp", "admm", or "altmin".
    config : optional
        Method config; defaults are the method's own defaults.
    rank : int, optional
        Factor rank for gd/svp/altmin (those methods need one; admm does
        not). For svp/altmin a rank given here overrides config.r.

    Returns
    -------
    SdpSolution
        X is the lifted estimate, objective equals trace(C X). The solver's
        termination is available on solver_result.
    """
    if method not in _DEFAULT_CONFIGS:
        raise ValueError("unknown method %r" % (method,))
    instance, L = reduced_instance(problem)
    if config is None:
        config = _DEFAULT_CONFIGS[method]()
    if method == "gd":
        if rank is None:
            raise ValueError("method 'gd' needs a rank")
        result = solve_gd(instance, rank, config)
    elif method == "svp":
        if rank is not None:
            config = dataclasses.replace(config, r=rank)
        result = solve_svp(instance, config)
    elif method == "altmin":
        if rank is not None:
            config = dataclasses.replace(config, r=rank)
        result = solve_altmin(instance, config)
    else:
        result = solve_nuclear_admm(instance, config)
    X = lift_solution(result.X, L)
    objective = float(np.sum(problem.C * X))
    return SdpSolution(X=X, objective=objective, solver_result=result)


def save_sdp(problem, path):
    """Write the plain-text sparse format.

    Line 1: ``n m``. Line 2: the m values of b. Then one line per stored
    entry, ``mat row col value``, where mat 0 is the cost matrix and
    1..m the constraints; only upper-triangle (row <= col) entries are
    listed, and symmetric mirrors are implied. Indices are zero-based.
    """
    with open(path, "w") as fh:
        fh.write("%d %d\n" % (problem.n, problem.m))
        fh.write(" ".join(repr(float(v)) for v in problem.b) + "\n")
        mats = [np.asarray(problem.C)] + [np.asarray(A)
                                          for A in problem.constraints]
        for idx, M in enumerate(mats):
            rows, cols = np.nonzero(np.triu(M))
            for r, c in zip(rows, cols):
                fh.write("%d %d %d %r\n" % (idx, r, c, float(M[r, c])))


def load_sdp(path):
    """Read the format written by :func:`save_sdp`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("expected header 'n m'")
        n, m = int(header[0]), int(header[1])
        b = np.array([float(v) for v in fh.readline().split()])
        if b.shape[0] != m:
            raise ValueError("expected %d values of b, got %d" % (m, b.shape[0]))
        mats = np.zeros((m + 1, n, n))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            idx, r, c = int(parts[0]), int(parts[1]), int(parts[2])
            v = float(parts[3])
            if not 0 <= idx <= m:
                raise ValueError("matrix index %d out of range" % idx)
            if r > c:
                raise ValueError("entries must satisfy row <= col")
            mats[idx, r, c] = v
            mats[idx, c, r] = v
    return SdpProblem(C=mats[0], constraints=list(mats[1:]), b=b)
