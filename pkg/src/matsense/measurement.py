"""Random measurement ensembles and sensing instances.

A measurement ensemble holds m matrices A_1..A_m of size n x n and exposes
the linear map X -> (<A_i, X>_F)_i and its adjoint alpha -> sum_i alpha_i A_i.
Two sampled families are provided, dense GOE matrices and sparse 0/1
Bernoulli matrices, plus a "dense" kind wrapping explicitly given matrices.

Storage is a single C-contiguous (m, n, n) array for dense kinds, viewed as
the (m, n^2) design matrix for BLAS-friendly apply/adjoint, and a CSR design
matrix of the same shape for the sparse kind.
"""

import dataclasses
import json
import os

import numpy as np
import scipy.sparse as sp

from .errors import NumericError

_TRIPLET_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("val", "<f8")])

# chunk size (matrices per block) for in-place GOE symmetrization
_GOE_CHUNK = 64


def _symmetrize_goe_block(block):
    # block holds iid N(0,1); rebuild it as GOE in place: strict upper
    # mirrored, diagonal scaled to variance 2
    diag = np.sqrt(2.0) * np.einsum("...ii->...i", block).copy()
    upper = np.triu(block, 1)
    block[:] = upper
    block += np.transpose(upper, (0, 2, 1))
    np.einsum("...ii->...i", block)[:] = diag


def sample_goe_batch(n, count, rng):
    """Draw ``count`` independent GOE matrices as a (count, n, n) array.

    Off-diagonal entries are N(0, 1) with A[i, j] == A[j, i] exactly
    (bit for bit), diagonal entries are N(0, 2).
    """
    mats = rng.standard_normal((count, n, n))
    for start in range(0, count, _GOE_CHUNK):
        _symmetrize_goe_block(mats[start:start + _GOE_CHUNK])
    return mats


def sample_goe(n, rng):
    """Draw one n x n GOE matrix (diagonal variance 2, off-diagonal 1)."""
    return sample_goe_batch(n, 1, rng)[0]


def sample_bernoulli(n, rho, rng):
    """Draw one sparse n x n matrix with iid Bernoulli(rho) entries in {0, 1}.

    The matrix is not symmetrized. Returned in COO format.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1], got %r" % (rho,))
    mask = rng.random((n, n)) < rho
    rows, cols = np.nonzero(mask)
    vals = np.ones(rows.shape[0], dtype=np.float64)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n))


class MeasurementEnsemble:
    """m linear measurements of n x n matrices.

    Parameters
    ----------
    kind : str
        "goe" (dense symmetric Gaussian), "bernoulli" (sparse 0/1), or
        "dense" (explicitly given matrices).
    n, m : int
        Matrix side and number of measurements.
    dense : ndarray of shape (m, n, n), optional
        Storage for dense kinds.
    design : scipy.sparse.csr_matrix of shape (m, n*n), optional
        Storage for the sparse kind.
    rho : float, optional
        Bernoulli density (sparse kind only).

    The instance is immutable; underlying buffers are marked read-only so it
    is safe to share across threads.
    """

    def __init__(self, kind, n, m, dense=None, design=None, rho=None):
        if kind not in ("goe", "bernoulli", "dense"):
            raise ValueError("unknown ensemble kind %r" % (kind,))
        if n < 1 or m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        self.kind = kind
        self.n = int(n)
        self.m = int(m)
        self.rho = None if rho is None else float(rho)
        if kind == "bernoulli":
            if design is None or design.shape != (m, n * n):
                raise ValueError("sparse kind needs a (m, n*n) CSR design")
            self._dense = None
            self._design = design.tocsr()
            self._design.data.flags.writeable = False
            self._design.indices.flags.writeable = False
            self._design.indptr.flags.writeable = False
        else:
            if dense is None or dense.shape != (m, n, n):
                raise ValueError("dense kind needs a (m, n, n) array")
            self._dense = np.ascontiguousarray(dense, dtype=np.float64)
            self._dense.flags.writeable = False
            self._design = None
        self._gather = None

    @classmethod
    def from_matrices(cls, mats, kind="dense"):
        """Wrap an explicit stack or list of n x n matrices."""
        mats = np.asarray(mats, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError("expected shape (m, n, n), got %r" % (mats.shape,))
        m, n = mats.shape[0], mats.shape[1]
        return cls(kind, n, m, dense=mats)

    @property
    def design(self):
        """The (m, n^2) design matrix, ndarray view or CSR."""
        if self._dense is not None:
            return self._dense.reshape(self.m, self.n * self.n)
        return self._design

    @property
    def is_sparse(self):
        return self._design is not None

    def matrix(self, i):
        """Return A_i as a dense (n, n) array."""
        if self._dense is not None:
            return self._dense[i]
        return np.asarray(
            self._design.getrow(i).todense()
        ).reshape(self.n, self.n)

    def to_dense(self):
        """All matrices as one (m, n, n) array. Small instances only."""
        if self._dense is not None:
            return self._dense
        return np.asarray(self._design.todense()).reshape(self.m, self.n, self.n)

    @property
    def triplets(self):
        """Sparse nonzeros as (mat_idx, rows, cols, vals), cached.

        Sorted by matrix index then flat position; used by the factored
        residual path and by serialization.
        """
        if self._gather is None:
            if self._design is None:
                raise ValueError("triplets are only stored for the sparse kind")
            csr = self._design
            counts = np.diff(csr.indptr)
            mat_idx = np.repeat(np.arange(self.m, dtype=np.int64), counts)
            rows = (csr.indices // self.n).astype(np.int64)
            cols = (csr.indices % self.n).astype(np.int64)
            self._gather = (mat_idx, rows, cols, csr.data)
        return self._gather

    def apply(self, X):
        """Evaluate the measurement map, component i is <A_i, X>_F.

        For symmetric X this equals trace(A_i X) for every kind. X must be
        (n, n); it is not symmetrized here.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (self.n, self.n):
            raise ValueError("X must be (%d, %d), got %r" % (self.n, self.n, X.shape))
        x = np.ascontiguousarray(X).reshape(self.n * self.n)
        return self.design @ x

    def apply_adjoint(self, alpha):
        """Evaluate the adjoint map, sum_i alpha_i A_i, as a dense (n, n)."""
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (self.m,):
            raise ValueError("alpha must have length m=%d" % self.m)
        if self._dense is not None:
            flat = self.design.T @ alpha
        else:
            flat = self._design.T @ alpha
        return np.asarray(flat).reshape(self.n, self.n)


def apply_operator(ensemble, X):
    """Measurement map of ``ensemble`` applied to X; see
    :meth:`MeasurementEnsemble.apply`."""
    return ensemble.apply(X)


def apply_adjoint(ensemble, alpha):
    """Adjoint of the measurement map; see
    :meth:`MeasurementEnsemble.apply_adjoint`."""
    return ensemble.apply_adjoint(alpha)


def generate_ensemble(kind, n, m, rng, rho=None):
    """Sample a measurement ensemble.

    Parameters
    ----------
    kind : str
        "goe" or "bernoulli".
    n, m : int
        Matrix side and number of measurements.
    rng : numpy.random.Generator
        Source of randomness; the draw order is fixed (matrices are sampled
        in index order), so a given generator state pins the ensemble.
    rho : float, optional
        Bernoulli density, required for kind "bernoulli".
    """
    if kind == "goe":
        return MeasurementEnsemble("goe", n, m, dense=sample_goe_batch(n, m, rng))
    if kind == "bernoulli":
        if rho is None:
            raise ValueError("kind 'bernoulli' needs rho")
        rows_all = []
        cols_all = []
        counts = np.empty(m, dtype=np.int64)
        for i in range(m):
            mask = rng.random((n, n)) < rho
            r, c = np.nonzero(mask)
            rows_all.append(r)
            cols_all.append(c)
            counts[i] = r.shape[0]
        rows = np.concatenate(rows_all) if rows_all else np.empty(0, np.int64)
        cols = np.concatenate(cols_all) if cols_all else np.empty(0, np.int64)
        indices = rows * n + cols
        indptr = np.concatenate(([0], np.cumsum(counts)))
        data = np.ones(indices.shape[0], dtype=np.float64)
        design = sp.csr_matrix(
            (data, indices, indptr), shape=(m, n * n), copy=False
        )
        return MeasurementEnsemble("bernoulli", n, m, design=design, rho=rho)
    raise ValueError("unknown ensemble kind %r" % (kind,))


@dataclasses.dataclass(frozen=True)
class Truth:
    """Planted factor with the spectrum of X* = Z Z^T.

    sigma holds the r nonzero eigenvalues of X* in nonincreasing order and
    kappa their ratio sigma[0] / sigma[-1].
    """

    Z: np.ndarray
    sigma: np.ndarray
    kappa: float

    @property
    def X(self):
        return self.Z @ self.Z.T


@dataclasses.dataclass(frozen=True)
class Instance:
    """A sensing instance: ensemble, right-hand side b, optional truth."""

    ensemble: MeasurementEnsemble
    b: np.ndarray
    truth: Truth = None
    seed: int = None

    @property
    def n(self):
        return self.ensemble.n

    @property
    def m(self):
        return self.ensemble.m


def make_truth(Z):
    """Build a :class:`Truth` from a factor, computing sigma and kappa."""
    Z = np.asarray(Z, dtype=np.float64)
    # nonzero eigenvalues of Z Z^T equal those of the r x r Gram Z^T Z
    gram = Z.T @ Z
    sigma = np.sort(np.linalg.eigvalsh(gram))[::-1].copy()
    if sigma[-1] <= 0:
        raise NumericError("planted factor is rank deficient")
    return Truth(Z=Z, sigma=sigma, kappa=float(sigma[0] / sigma[-1]))


def generate_instance(n, r, m, kind, rng, rho=None, seed=None):
    """Sample a planted instance with X* = Z* Z*^T, Z* iid standard normal.

    Draw order is fixed: the factor Z* first, then the ensemble, so one
    generator state determines the instance bit for bit. b is computed as
    apply_operator(ensemble, X*).
    """
    Z = rng.standard_normal((n, r))
    truth = make_truth(Z)
    ensemble = generate_ensemble(kind, n, m, rng, rho=rho)
    b = ensemble.apply(truth.X)
    return Instance(ensemble=ensemble, b=b, truth=truth, seed=seed)


def _write_array(path, arr, dtype):
    np.ascontiguousarray(arr, dtype=dtype).tofile(path)


def save_instance(instance, path):
    """Write an instance to a directory.

    Layout (field names are part of the on-disk contract):

    * ``meta.json``, keys kind, n, m, r, rho, seed, sigma, kappa (JSON
      numbers round-trip float64 exactly; r, rho, seed, sigma, kappa are
      null when absent)
    * ``b.f64``, little-endian float64, length m
    * dense kinds: ``matrices.f64``, little-endian float64, m*n*n values in
      C order
    * sparse kind: ``matrices.triplets`` with packed little-endian records
      (row u32, col u32, value f64) grouped by matrix, and ``nnz.u64`` with
      m little-endian u64 per-matrix counts
    * ``zstar.f64``, little-endian float64, n*r values in C order, present
      only when the truth is known
    """
    os.makedirs(path, exist_ok=True)
    ens = instance.ensemble
    truth = instance.truth
    meta = {
        "format": "matsense-instance",
        "version": 1,
        "kind": ens.kind,
        "n": ens.n,
        "m": ens.m,
        "r": None if truth is None else int(truth.Z.shape[1]),
        "rho": ens.rho,
        "seed": None if instance.seed is None else int(instance.seed),
        "sigma": None if truth is None else [float(s) for s in truth.sigma],
        "kappa": None if truth is None else float(truth.kappa),
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    _write_array(os.path.join(path, "b.f64"), instance.b, "<f8")
    if ens.is_sparse:
        mat_idx, rows, cols, vals = ens.triplets
        rec = np.empty(rows.shape[0], dtype=_TRIPLET_DTYPE)
        rec["row"] = rows
        rec["col"] = cols
        rec["val"] = vals
        rec.tofile(os.path.join(path, "matrices.triplets"))
        counts = np.diff(ens.design.indptr)
        _write_array(os.path.join(path, "nnz.u64"), counts, "<u8")
    else:
        _write_array(os.path.join(path, "matrices.f64"), ens.to_dense(), "<f8")
    if truth is not None:
        _write_array(os.path.join(path, "zstar.f64"), truth.Z, "<f8")


def load_instance(path):
    """Read an instance directory written by :func:`save_instance`."""
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    if meta.get("format") != "matsense-instance":
        raise ValueError("%s does not hold a serialized instance" % path)
    kind, n, m = meta["kind"], int(meta["n"]), int(meta["m"])
    b = np.fromfile(os.path.join(path, "b.f64"), dtype="<f8")
    if b.shape[0] != m:
        raise ValueError("b.f64 holds %d values, expected %d" % (b.shape[0], m))
    if kind == "bernoulli":
        rec = np.fromfile(os.path.join(path, "matrices.triplets"),
                          dtype=_TRIPLET_DTYPE)
        counts = np.fromfile(os.path.join(path, "nnz.u64"), dtype="<u8")
        if counts.shape[0] != m or int(counts.sum()) != rec.shape[0]:
            raise ValueError("triplet counts disagree with nnz.u64")
        indices = rec["row"].astype(np.int64) * n + rec["col"].astype(np.int64)
        indptr = np.concatenate(([0], np.cumsum(counts.astype(np.int64))))
        design = sp.csr_matrix(
            (rec["val"].astype(np.float64), indices, indptr),
            shape=(m, n * n), copy=False,
        )
        ensemble = MeasurementEnsemble(
            "bernoulli", n, m, design=design, rho=meta.get("rho")
        )
    else:
        dense = np.fromfile(os.path.join(path, "matrices.f64"), dtype="<f8")
        if dense.shape[0] != m * n * n:
            raise ValueError("matrices.f64 has the wrong length")
        ensemble = MeasurementEnsemble(kind, n, m, dense=dense.reshape(m, n, n))
    truth = None
    if meta.get("r") is not None:
        r = int(meta["r"])
        Z = np.fromfile(os.path.join(path, "zstar.f64"), dtype="<f8")
        truth = make_truth(Z.reshape(n, r))
    seed = meta.get("seed")
    return Instance(ensemble=ensemble, b=b, truth=truth,
                    seed=None if seed is None else int(seed))
