"""Scikit-learn style estimator wrappers around the solvers.

Each estimator recovers a positive semidefinite matrix from linear
measurements: fit takes the measurement operator (a MeasurementEnsemble or
a raw (m, n, n) array of measurement matrices) and the observation vector,
stores the recovered matrix as X_, and predict maps new measurement
matrices to their predicted observations tr(A_i X_). Hyperparameters are
plain constructor arguments, so get_params, set_params, and clone work.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import (AdmmConfig, AltMinConfig, SvpConfig, solve_altmin,
                        solve_nuclear_admm, solve_svp)
from .gd import GdConfig, solve_gd
from .measurement import Instance, MeasurementEnsemble


def _as_ensemble(A):
    if isinstance(A, MeasurementEnsemble):
        return A
    return MeasurementEnsemble.from_matrices(np.asarray(A, dtype=np.float64))


class _RecoveryEstimator(BaseEstimator):
    """Shared fit/predict plumbing; subclasses supply _solve."""

    def _solve(self, instance):
        raise NotImplementedError

    def fit(self, A, b, truth=None):
        """Recover a matrix from measurements.

        Parameters
        ----------
        A : MeasurementEnsemble or ndarray of shape (m, n, n)
            Measurement operator.
        b : ndarray of shape (m,)
            Observations tr(A_i X).
        truth : Truth, optional
            Planted solution; when given, the solver tracks relative error
            against it and can stop on the error tolerance.
        """
        ensemble = _as_ensemble(A)
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != ensemble.m:
            raise ValueError("b has %d entries for %d measurements"
                             % (b.shape[0], ensemble.m))
        instance = Instance(ensemble=ensemble, b=b, truth=truth)
        result = self._solve(instance)
        self.result_ = result
        self.X_ = result.X
        self.Z_ = result.Z
        self.n_iter_ = result.iterations
        self.termination_ = result.termination
        return self

    def _check_fitted(self):
        if not hasattr(self, "X_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, A):
        """Predicted observations tr(A_i X_) for new measurement matrices."""
        self._check_fitted()
        return _as_ensemble(A).apply(self.X_)

    def score(self, A, b):
        """Negative relative residual, higher is better (0 is exact)."""
        self._check_fitted()
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        denom = max(float(np.linalg.norm(b)), 1e-300)
        return -float(np.linalg.norm(self.predict(A) - b)) / denom


class GradientRecovery(_RecoveryEstimator):
    """Factored gradient descent with spectral initialization.

    Parameters
    ----------
    rank : int
        Factor width of the recovered matrix X = Z Z^T.
    mu : float
        Dimensionless step scale.
    max_iters, tol, stall_tol : solver stopping controls.
    """

    def __init__(self, rank=1, mu=0.8, max_iters=100000, tol=1e-5,
                 stall_tol=1e-12):
        self.rank = rank
        self.mu = mu
        self.max_iters = max_iters
        self.tol = tol
        self.stall_tol = stall_tol

    def _solve(self, instance):
        config = GdConfig(mu=self.mu, max_iters=self.max_iters,
                          rel_err_tol=self.tol, stall_tol=self.stall_tol)
        return solve_gd(instance, self.rank, config)


class SvpRecovery(_RecoveryEstimator):
    """Projected gradient descent onto the rank-r manifold."""

    def __init__(self, rank=1, step=1e-4, max_iters=10000, tol=1e-5):
        self.rank = rank
        self.step = step
        self.max_iters = max_iters
        self.tol = tol

    def _solve(self, instance):
        config = SvpConfig(r=self.rank, step=self.step,
                           max_iters=self.max_iters, rel_err_tol=self.tol)
        return solve_svp(instance, config)


class NuclearNormRecovery(_RecoveryEstimator):
    """Nuclear-norm relaxation solved by dual ADMM (no rank input)."""

    def __init__(self, lam=1e-5, eta=100.0, max_iters=10000, tol=1e-5,
                 max_gram_size=20000):
        self.lam = lam
        self.eta = eta
        self.max_iters = max_iters
        self.tol = tol
        self.max_gram_size = max_gram_size

    def _solve(self, instance):
        config = AdmmConfig(lam=self.lam, eta=self.eta,
                            max_iters=self.max_iters, rel_err_tol=self.tol,
                            max_gram_size=self.max_gram_size)
        return solve_nuclear_admm(instance, config)


class AltMinRecovery(_RecoveryEstimator):
    """Alternating least squares over the two low-rank factors."""

    def __init__(self, rank=1, ridge=1e-10, max_iters=1000, tol=1e-5):
        self.rank = rank
        self.ridge = ridge
        self.max_iters = max_iters
        self.tol = tol

    def _solve(self, instance):
        config = AltMinConfig(r=self.rank, ridge=self.ridge,
                              max_iters=self.max_iters, rel_err_tol=self.tol)
        return solve_altmin(instance, config)
