"""Baseline solvers: SVP, dual ADMM for nuclear-norm minimization, and
alternating least squares over X = U V^T.

All three share the gradient solver's SolveResult contract and termination
taxonomy; traces use the same objective f(X) = (1/4m)||A(X) - b||^2 on the
current primal estimate so time-to-accuracy curves are directly comparable.
"""

import dataclasses

import numpy as np
import scipy.linalg

from .errors import GramFactorizationError
from .gd import IterationTracker, SolveResult
from .linalg import best_rank_r, randomized_svd, svt_prox

_RIDGE = 1e-10


@dataclasses.dataclass
class SvpConfig:
    """Singular value projection settings.

    step is the raw gradient step on X (the adjoint is unnormalized, so
    useful steps scale like 1/m; 1e-4 suits dense GOE instances and 1e-3
    sparse Bernoulli ones).
    """

    r: int = 1
    step: float = 1e-4
    max_iters: int = 10000
    rel_err_tol: float = 1e-5
    stall_tol: float = 1e-12
    trace_dense_limit: int = 10000
    trace_stride: int = 10


@dataclasses.dataclass
class AdmmConfig:
    """Dual ADMM settings for min (1/2 lam)||A(X)-b||^2 + ||X||_*.

    lam weighs the data fit (small lam enforces the constraints), eta is
    the augmented-Lagrangian penalty. The m x m Gram matrix of the design
    is formed and Cholesky-factored once; max_gram_size caps the m for
    which that is allowed.
    """

    lam: float = 1e-5
    eta: float = 100.0
    max_iters: int = 10000
    rel_err_tol: float = 1e-5
    stall_tol: float = 1e-12
    max_gram_size: int = 20000
    trace_dense_limit: int = 10000
    trace_stride: int = 10


@dataclasses.dataclass
class AltMinConfig:
    """Alternating least squares settings; ridge regularizes each solve."""

    r: int = 1
    ridge: float = _RIDGE
    max_iters: int = 1000
    rel_err_tol: float = 1e-5
    stall_tol: float = 1e-12
    trace_dense_limit: int = 10000
    trace_stride: int = 10


def solve_svp(instance, config):
    """Projected gradient descent with rank-r truncation.

    X^{t+1} = P_r(X^t - step * A^T(A(X^t) - b)) from X^0 = 0, where P_r is
    the best rank-r approximation (randomized SVD at large n).
    """
    tracker = IterationTracker(instance, config)
    ens = instance.ensemble
    m = instance.m
    X = np.zeros((ens.n, ens.n))
    k = 0
    while True:
        w = ens.apply(X) - instance.b
        f = float(w @ w) / (4.0 * m)
        reason = tracker.step(k, f, tracker.rel_err_dense(X), np.nan,
                              np.linalg.norm(w))
        if reason is not None:
            break
        X = best_rank_r(X - config.step * ens.apply_adjoint(w), config.r)
        k += 1
    trace, reason, k = tracker.finish(reason, k)
    return SolveResult(X=X, Z=None, trace=trace, termination=reason,
                       iterations=k, aux={})


def _gram(design):
    if hasattr(design, "toarray"):
        return (design @ design.T).toarray()
    return design @ design.T


def solve_nuclear_admm(instance, config):
    """ADMM on the dual of nuclear-norm minimization.

    Iterates the condensed two-step recursion (the spectral-ball auxiliary
    V is eliminated through the multiplier update)

        alpha <- (lam I + eta G)^{-1} (b + Adesign vec(eta A^T(alpha)
                                        + X_prev - 2 X))
        X     <- prox_eta(eta A^T(alpha) + X)

    from alpha = 0, X_prev = X = 0, with G = Adesign Adesign^T factored
    once. The multiplier sequence X is the primal estimate. aux carries the
    final alpha and the penultimate X so the eliminated dual iterate
    proj(A^T(alpha) + X_prev/eta) can be reconstructed.
    """
    ens = instance.ensemble
    m = instance.m
    if m > config.max_gram_size:
        raise GramFactorizationError(
            "m=%d exceeds max_gram_size=%d; the ADMM Gram matrix would need "
            "%.1f GB" % (m, config.max_gram_size, 8.0 * m * m / 1e9))
    tracker = IterationTracker(instance, config)
    design = ens.design
    G = _gram(design)
    G *= config.eta
    G[np.diag_indices_from(G)] += config.lam
    try:
        chol = scipy.linalg.cho_factor(G, lower=True, overwrite_a=True,
                                       check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise GramFactorizationError(
            "Cholesky of (lam I + eta G) failed (%s); increase lam" % exc)

    n = ens.n
    alpha = np.zeros(m)
    X_prev = np.zeros((n, n))
    X = np.zeros((n, n))
    k = 0
    while True:
        w = ens.apply(X) - instance.b
        f = float(w @ w) / (4.0 * m)
        reason = tracker.step(k, f, tracker.rel_err_dense(X), np.nan,
                              np.linalg.norm(w))
        if reason is not None:
            break
        S = config.eta * ens.apply_adjoint(alpha) + X_prev - 2.0 * X
        rhs = instance.b + design @ S.reshape(-1)
        alpha = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
        W = config.eta * ens.apply_adjoint(alpha) + X
        X_prev = X
        X = svt_prox(W, config.eta)
        k += 1
    trace, reason, k = tracker.finish(reason, k)
    return SolveResult(X=X, Z=None, trace=trace, termination=reason,
                       iterations=k,
                       aux={"alpha_final": alpha, "X_prev": X_prev})


def _altmin_design(ens, F, transpose):
    """Rows vec(A_i^T F) (transpose=True) or vec(A_i F), shape (m, n*r)."""
    if ens.is_sparse:
        mat_idx, rows, cols, vals = ens.triplets
        m, n = ens.m, ens.n
        r = F.shape[1]
        out = np.zeros((m, n, r))
        if transpose:
            # (A_i^T F)[c, :] += v * F[r0, :] for each stored (r0, c, v)
            np.add.at(out, (mat_idx, cols), vals[:, None] * F[rows])
        else:
            np.add.at(out, (mat_idx, rows), vals[:, None] * F[cols])
        return out.reshape(m, n * r)
    mats = ens.to_dense()
    if transpose:
        prod = np.matmul(np.transpose(mats, (0, 2, 1)), F)
    else:
        prod = np.matmul(mats, F)
    return prod.reshape(ens.m, -1)


def _ridge_solve(D, b, ridge):
    # ridge-regularized normal equations; LinAlgError propagates to caller.
    # For symmetric measurement matrices the design is rank deficient by one
    # gauge dimension per antisymmetric r x r direction. Those directions
    # carry no signal, only rhs roundoff that a tiny ridge would amplify by
    # 1/ridge, so eigendirections below the roundoff floor are zeroed (the
    # minimum-norm solution) instead of divided by the ridge.
    H = D.T @ D
    rhs = D.T @ b
    s, Q = scipy.linalg.eigh(H)
    floor = max(ridge, 1e-12 * float(s[-1]), 0.0)
    inv = np.where(s > floor, 1.0 / (s + ridge), 0.0)
    return Q @ (inv * (Q.T @ rhs))


def update_v_factor(instance, U, ridge=_RIDGE):
    """Least squares for V with U fixed: rows of the design are vec(A_i^T U),
    since <A_i, U V^T>_F = <V, A_i^T U>_F."""
    D = _altmin_design(instance.ensemble, U, transpose=True)
    v = _ridge_solve(D, instance.b, ridge)
    return v.reshape(instance.n, U.shape[1])


def update_u_factor(instance, V, ridge=_RIDGE):
    """Least squares for U with V fixed: rows of the design are vec(A_i V)."""
    D = _altmin_design(instance.ensemble, V, transpose=False)
    u = _ridge_solve(D, instance.b, ridge)
    return u.reshape(instance.n, V.shape[1])


def solve_altmin(instance, config):
    """Alternating minimization of ||A(U V^T) - b||^2.

    U starts from the top-r left singular factors of A^T(b)/(2m) (the same
    surrogate mean the spectral initialization uses); each sweep solves the
    nr-dimensional ridge least squares for V, then for U. A singular
    normal-equations solve terminates the run with reason "ill-conditioned".

    The reported estimate is the symmetrized product (U V^T + V U^T)/2:
    the recovery target is symmetric, and with symmetric measurement
    matrices the antisymmetric part of U V^T is a gauge direction the
    measurements cannot see.
    """
    ens = instance.ensemble
    m = instance.m
    r = config.r
    tracker = IterationTracker(instance, config)
    M = ens.apply_adjoint(instance.b) / (2.0 * m)
    if min(M.shape) < 64 or r + 8 >= min(M.shape):
        Uf, _, _ = np.linalg.svd(M)
        U = Uf[:, :r]
    else:
        U, _, _ = randomized_svd(M, r)
    V = np.zeros((ens.n, r))
    X = np.zeros((ens.n, ens.n))
    k = 0
    while True:
        w = ens.apply(X) - instance.b
        f = float(w @ w) / (4.0 * m)
        reason = tracker.step(k, f, tracker.rel_err_dense(X), np.nan,
                              np.linalg.norm(w))
        if reason is not None:
            break
        try:
            V = update_v_factor(instance, U, config.ridge)
            U = update_u_factor(instance, V, config.ridge)
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
            reason = "ill-conditioned"
            if not tracker.rows or tracker.rows[-1][0] != float(k):
                tracker.rows.append((float(k), f, tracker.rel_err_dense(X),
                                     np.nan, tracker.rows[-1][4]))
            break
        X = 0.5 * (U @ V.T + V @ U.T)
        k += 1
    trace, reason, k = tracker.finish(reason, k)
    return SolveResult(X=X, Z=None, trace=trace, termination=reason,
                       iterations=k, aux={"U": U, "V": V})
