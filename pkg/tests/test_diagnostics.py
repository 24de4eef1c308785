"""Tests for the Monte-Carlo diagnostics.

Analytic zero cases (exact expectations plugged in, zero vectors, points on
the truth orbit) must come out exactly or to roundoff; sampled deviations
are only bounded loosely, since the checks report raw numbers and leave
thresholds to callers. The rate fit is checked against synthetic geometric
traces where the slope is known in closed form.
"""

import json

import numpy as np
import pytest

from matsense.diagnostics import (RateEstimate, check_a1,
                                  check_hessian_expectation,
                                  check_mean_estimator, check_regularity,
                                  estimate_rate, mean_deviation)
from matsense.errors import InsufficientDataError
from matsense.measurement import generate_instance
from matsense.rng import make_rng


def _trace_from_dist(dist):
    dist = np.asarray(dist, dtype=np.float64)
    k = np.arange(dist.shape[0], dtype=np.float64)
    cols = [k, np.ones_like(k), np.full_like(k, np.nan), dist, k * 1e-3]
    return np.stack(cols, axis=1)


def test_mean_deviation_zero_at_expectation():
    rng = make_rng(0, "diag", "mean")
    Z = rng.standard_normal((10, 2))
    Xstar = Z @ Z.T
    assert mean_deviation(2.0 * Xstar, Xstar) == 0.0
    assert mean_deviation(np.zeros_like(Xstar), Xstar) == pytest.approx(1.0)


def test_mean_estimator_sweep_decays_like_root_m():
    rng = make_rng(1, "diag", "sweep")
    report = check_mean_estimator(40, 1, [80, 160, 320, 640], 10, rng)
    assert report.statistic == "mean-estimator"
    assert report.m == [80, 160, 320, 640]
    assert len(report.deviations) == 4
    assert all(len(row) == 10 for row in report.deviations)
    # mean deviation shrinks with m and the log-log slope sits near -1/2
    assert report.means[0] > report.means[-1]
    assert -0.7 <= report.slope <= -0.3
    parsed = json.loads(report.to_json())
    assert parsed["slope"] == pytest.approx(report.slope)
    assert parsed["trials"] == 10


def test_a1_zero_direction_is_exact():
    rng = make_rng(2, "diag", "a1zero")
    assert check_a1(12, 50, 0.1, np.zeros(12), rng) == 0.0


def test_a1_concentrates_on_unit_direction():
    rng = make_rng(3, "diag", "a1")
    u = np.zeros(30)
    u[0] = 1.0
    dev = check_a1(30, 3000, 0.1, u, rng)
    assert 0.0 < dev < 0.5


def test_hessian_expectation_zero_vector_exact():
    rng = make_rng(4, "diag", "hzero")
    assert check_hessian_expectation(np.zeros(8), np.zeros(8), 100, rng) == 0.0


def test_hessian_expectation_concentrates():
    rng = make_rng(5, "diag", "hess")
    e1 = np.zeros(20)
    e1[0] = 1.0
    e2 = np.zeros(20)
    e2[1] = 1.0
    assert check_hessian_expectation(e1, e1, 4000, rng) < 0.2
    # orthogonal pair: expectation is y x^T alone, deviation still small
    assert check_hessian_expectation(e1, e2, 4000, rng) < 0.2


def test_regularity_zero_on_truth_orbit():
    rng = make_rng(6, "diag", "reg")
    inst = generate_instance(20, 2, 300, "goe", rng)
    margin = check_regularity(inst, inst.truth.Z, 24.0, 1000.0)
    assert abs(margin) <= 1e-10
    # rotated copies of the truth sit on the same orbit
    G = rng.standard_normal((2, 2))
    O, _ = np.linalg.qr(G)
    margin_rot = check_regularity(inst, inst.truth.Z @ O, 24.0, 1000.0)
    assert abs(margin_rot) <= 1e-10


def test_regularity_orbit_invariance_off_truth():
    rng = make_rng(7, "diag", "reginv")
    inst = generate_instance(20, 2, 300, "goe", rng)
    Z = inst.truth.Z + 0.1 * rng.standard_normal((20, 2))
    G = rng.standard_normal((2, 2))
    O, _ = np.linalg.qr(G)
    m0 = check_regularity(inst, Z, 24.0, 1000.0)
    m1 = check_regularity(inst, Z @ O, 24.0, 1000.0)
    assert m1 == pytest.approx(m0, rel=1e-8, abs=1e-12)


def test_regularity_tiny_alpha_forces_negative_margin():
    rng = make_rng(8, "diag", "regneg")
    inst = generate_instance(20, 2, 300, "goe", rng)
    Z = inst.truth.Z + 0.1 * rng.standard_normal((20, 2))
    assert check_regularity(inst, Z, 1e-6, 1000.0) < 0.0


def test_regularity_requires_truth():
    rng = make_rng(9, "diag", "regtruthless")
    inst = generate_instance(10, 1, 30, "goe", rng)
    stripped = type(inst)(ensemble=inst.ensemble, b=inst.b, truth=None)
    with pytest.raises(ValueError, match="truth"):
        check_regularity(stripped, np.zeros((10, 1)), 24.0, 1000.0)


def test_estimate_rate_recovers_geometric_decay():
    est = estimate_rate(_trace_from_dist(0.9 ** np.arange(100.0)))
    assert est.slope == pytest.approx(np.log10(0.9), abs=1e-9)
    assert est.r_squared == pytest.approx(1.0, abs=1e-12)
    assert not est.degenerate


def test_estimate_rate_uses_middle_window():
    # corrupt the first and last 10% of rows; the fit must not see them
    dist = 0.9 ** np.arange(100.0)
    dist[:10] *= 100.0
    dist[90:] *= 100.0
    est = estimate_rate(_trace_from_dist(dist))
    assert est.slope == pytest.approx(np.log10(0.9), abs=1e-9)


def test_estimate_rate_flags_flat_trace():
    est = estimate_rate(_trace_from_dist(np.full(50, 0.25)))
    assert est == RateEstimate(slope=0.0, r_squared=0.0, degenerate=True)


def test_estimate_rate_rejects_short_traces():
    dist = 0.5 ** np.arange(30.0)
    dist[15:] = np.nan
    with pytest.raises(InsufficientDataError, match="20"):
        estimate_rate(_trace_from_dist(dist))
    with pytest.raises(ValueError, match="trace"):
        estimate_rate(np.zeros((5, 2)))
