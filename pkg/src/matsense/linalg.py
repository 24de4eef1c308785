"""Dense linear-algebra kernels shared by the solvers and diagnostics."""

import dataclasses

import numpy as np

from .errors import NumericError, RankError
from .rng import make_rng

# full SVD below this side length; randomized truncation above
_FULL_SVD_MAX_N = 64

# fixed stream for callers of best_rank_r that pass no generator, so
# repeated solves are deterministic without threading an rng through
_DEFAULT_SKETCH_SEED = 0x5EED_5FD5


@dataclasses.dataclass(frozen=True)
class EigenPairs:
    """Top eigenpairs ordered by decreasing |value|."""

    values: np.ndarray
    vectors: np.ndarray


@dataclasses.dataclass(frozen=True)
class AlignmentResult:
    """Orthogonal alignment U and the aligned distance ||Z - Zstar U||_F."""

    U: np.ndarray
    distance: float


def _fix_signs(vectors):
    # sign convention: make the largest-|.| entry of each column positive,
    # ties broken by the lowest row index (argmax picks the first maximum)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        lead = np.argmax(np.abs(col))
        if col[lead] < 0:
            vectors[:, j] = -col
    return vectors


def top_r_eigenpairs(M, r):
    """Top-r eigenpairs of the symmetric part of M, by absolute eigenvalue.

    Parameters
    ----------
    M : ndarray of shape (n, n)
        Input matrix; symmetrized as (M + M^T)/2 before decomposition.
    r : int
        Number of pairs, 1 <= r <= n.

    Returns
    -------
    EigenPairs
        ``values`` sorted with |values[0]| >= ... >= |values[r-1]|,
        ``vectors`` the matching orthonormal columns. Each vector's
        largest-magnitude entry is made positive (ties at the lowest index)
        so the output is deterministic given M.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("M must be square, got %r" % (M.shape,))
    if not 1 <= r <= n:
        raise RankError("need 1 <= r <= n, got r=%d, n=%d" % (r, n))
    if not np.isfinite(M).all():
        raise NumericError("matrix has non-finite entries")
    sym = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    return EigenPairs(values=vals[order].copy(),
                      vectors=_fix_signs(vecs[:, order].copy()))


def randomized_svd(X, r, oversample=8, power_iters=2, rng=None):
    """Rank-r truncated SVD by randomized range finding.

    Gaussian sketch of width r + oversample, ``power_iters`` subspace
    iterations with QR re-orthonormalization, then an exact SVD of the
    projected (r + oversample) x p matrix.

    Returns
    -------
    (U, s, V)
        U (n, r), s (r,) nonincreasing, V (p, r), with X ~= U diag(s) V^T.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    n, p = X.shape
    if not 1 <= r <= min(n, p):
        raise RankError("need 1 <= r <= min(n, p)")
    if rng is None:
        rng = make_rng(_DEFAULT_SKETCH_SEED)
    k = min(r + oversample, min(n, p))
    Q = rng.standard_normal((p, k))
    Y = X @ Q
    Q, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        W, _ = np.linalg.qr(X.T @ Q)
        Q, _ = np.linalg.qr(X @ W)
    B = Q.T @ X
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub[:, :r]
    return U, s[:r].copy(), Vt[:r].T.copy()


def best_rank_r(X, r, rng=None):
    """Best rank-r approximation of X in Frobenius norm.

    Uses a full SVD for small matrices (side below 64) and randomized
    truncation otherwise. With ``rng=None`` the sketch uses a fixed internal
    stream, so repeated calls are deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if not 1 <= r <= min(n, p):
        raise RankError("need 1 <= r <= min(n, p)")
    if min(n, p) < _FULL_SVD_MAX_N or r + 8 >= min(n, p):
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        return (U[:, :r] * s[:r]) @ Vt[:r]
    U, s, V = randomized_svd(X, r, rng=rng)
    return (U * s) @ V.T


def procrustes_align(Z, Zstar):
    """Best orthogonal alignment of Z onto the orbit of Zstar.

    Solves min_U ||Z - Zstar U||_F over r x r orthogonal U; the minimizer is
    U = W V^T from the SVD Zstar^T Z = W S V^T, which makes Z^T Zstar U
    symmetric positive semidefinite.

    Returns
    -------
    AlignmentResult
        The optimal U and the distance ||Z - Zstar U||_F.
    """
    Z = np.asarray(Z, dtype=np.float64)
    Zstar = np.asarray(Zstar, dtype=np.float64)
    if Z.shape != Zstar.shape:
        raise ValueError("factor shapes differ: %r vs %r" % (Z.shape, Zstar.shape))
    W, _, Vt = np.linalg.svd(Zstar.T @ Z)
    U = W @ Vt
    distance = float(np.linalg.norm(Z - Zstar @ U))
    return AlignmentResult(U=U, distance=distance)


def factor_distance(Z, Zstar):
    """Orbit distance min_U ||Z - Zstar U||_F, U orthogonal."""
    return procrustes_align(Z, Zstar).distance


def svt_prox(X, eta):
    """Singular value thresholding, prox of eta * nuclear norm.

    Returns U max(S - eta, 0) V^T from a full SVD of X.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=np.float64),
                             full_matrices=False)
    shrunk = np.maximum(s - eta, 0.0)
    return (U * shrunk) @ Vt


def spectral_ball_project(X):
    """Projection onto the unit spectral-norm ball, U min(S, 1) V^T."""
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=np.float64),
                             full_matrices=False)
    return (U * np.minimum(s, 1.0)) @ Vt


def operator_norm(M):
    """Spectral norm of M.

    Symmetric input goes through :func:`top_r_eigenpairs`; asymmetric input
    through the top eigenvalue of M^T M.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == M.shape[1] and np.array_equal(M, M.T):
        return float(abs(top_r_eigenpairs(M, 1).values[0]))
    gram = M.T @ M
    top = top_r_eigenpairs(gram, 1).values[0]
    return float(np.sqrt(max(top, 0.0)))
