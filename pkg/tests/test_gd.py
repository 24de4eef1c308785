import dataclasses

import numpy as np
import pytest

from matsense.gd import (GdConfig, TRACE_COLUMNS, gradient, init_from_mean,
                         mean_estimate, objective, residuals, solve_gd,
                         solve_gd_auto_rank, spectral_init)
from matsense.linalg import factor_distance
from matsense.measurement import (Instance, MeasurementEnsemble,
                                  generate_ensemble, generate_instance,
                                  make_truth)
from matsense.rng import make_rng


def _identity_instance(b):
    ens = MeasurementEnsemble.from_matrices(np.eye(2)[None])
    return Instance(ensemble=ens, b=np.asarray(b, dtype=np.float64))


def test_objective_zero_at_truth():
    rng = make_rng(0, "obj-truth")
    inst = generate_instance(20, 2, 120, "goe", rng)
    assert objective(inst.truth.Z, inst) <= 1e-18


def test_objective_hand_value():
    # single measurement A = I, b = 0, Z = (1,1): f = (1/4) (z'z)^2 = 1
    inst = _identity_instance([0.0])
    Z = np.array([[1.0], [1.0]])
    assert objective(Z, inst) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(residuals(Z, inst), [2.0], atol=1e-14)


def test_objective_quadratic_in_residual():
    rng = make_rng(1, "obj-quad")
    inst = generate_instance(12, 2, 40, "goe", rng)
    Z = rng.standard_normal((12, 2))
    w = residuals(Z, inst)
    f = objective(Z, inst)
    for c in (2.0, -3.0, 0.5):
        # shift b so the residual scales by exactly c
        b_new = inst.ensemble.apply(Z @ Z.T) - c * w
        scaled = Instance(ensemble=inst.ensemble, b=b_new)
        assert objective(Z, scaled) == pytest.approx(c * c * f, rel=1e-12)


def test_gradient_zero_at_truth():
    rng = make_rng(2, "grad-truth")
    inst = generate_instance(15, 2, 90, "goe", rng)
    g = gradient(inst.truth.Z, inst)
    assert np.linalg.norm(g) <= 1e-10 * np.linalg.norm(inst.truth.Z)


def test_gradient_hand_value():
    # A = I, b = 0: grad = (z'z) z
    inst = _identity_instance([0.0])
    z = np.array([[1.5], [-0.5]])
    expect = float(np.sum(z * z)) * z
    np.testing.assert_allclose(gradient(z, inst), expect, atol=1e-13)


def _fd_gradient(Z, inst, h=1e-5):
    G = np.zeros_like(Z)
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            Zp = Z.copy()
            Zp[i, j] += h
            Zm = Z.copy()
            Zm[i, j] -= h
            G[i, j] = (objective(Zp, inst) - objective(Zm, inst)) / (2 * h)
    return G


@pytest.mark.parametrize("kind,rho", [("goe", None), ("bernoulli", 0.3)])
def test_gradient_matches_finite_differences(kind, rho):
    rng = make_rng(3, "grad-fd", kind)
    inst = generate_instance(15, 2, 45, kind, rng, rho=rho)
    Z = rng.standard_normal((15, 2))
    g = gradient(Z, inst)
    fd = _fd_gradient(Z, inst)
    scale = max(np.abs(fd).max(), 1.0)
    assert np.abs(g - fd).max() <= 1e-6 * scale


def test_init_exact_expectation_recovers_truth():
    # feeding the exact mean 2 X* reproduces the planted factor's orbit
    rng = make_rng(4, "init-exact")
    Z = rng.standard_normal((25, 3))
    truth = make_truth(Z)
    Z0, pairs = init_from_mean(2.0 * truth.X, 3)
    assert factor_distance(Z0, Z) <= 1e-8 * np.linalg.norm(Z)
    assert np.all(np.diff(np.abs(pairs.values)) <= 1e-12)


def test_spectral_init_concentrates():
    # the estimator approaches 2 X* in operator norm, which is what the
    # top-eigenpair initialization actually consumes
    rng = make_rng(5, "init-mc")
    inst = generate_instance(40, 2, 40 * 20, "goe", rng)
    M = mean_estimate(inst)
    target = 2 * inst.truth.X
    assert (np.linalg.norm(M - target, 2)
            <= 0.5 * np.linalg.norm(target, 2))
    Z0, _ = spectral_init(inst, 2)
    d = factor_distance(Z0, inst.truth.Z)
    assert d <= 0.5 * np.linalg.norm(inst.truth.Z)


def test_solve_converges_above_transition():
    rng = make_rng(6, "solve-easy")
    inst = generate_instance(40, 1, 8 * 40, "goe", rng)
    res = solve_gd(inst, 1, GdConfig(mu=0.3, max_iters=3000))
    assert res.termination == "converged"
    assert res.trace[-1, 2] < 1e-5
    assert res.aux["monotone_violations"] == 0
    # aux consistency
    denom = np.sum(np.abs(res.aux["init_values"])) / 2.0
    assert res.aux["denom"] == pytest.approx(denom)
    assert res.aux["step"] == pytest.approx(0.3 / denom)
    np.testing.assert_allclose(res.X, res.Z @ res.Z.T, atol=1e-12)


def test_solve_fails_below_transition():
    # m = n/2 is far below any recovery threshold
    for seed in range(5):
        rng = make_rng(seed, "solve-hard")
        inst = generate_instance(60, 1, 30, "goe", rng)
        res = solve_gd(inst, 1, GdConfig(mu=0.3, max_iters=800))
        assert res.termination != "converged"
        assert res.trace[-1, 2] > 1e-4


def test_oversized_step_diverges_or_cycles():
    rng = make_rng(7, "solve-big-step")
    inst = generate_instance(30, 1, 240, "goe", rng)
    res = solve_gd(inst, 1, GdConfig(mu=50.0, max_iters=2000))
    assert res.termination in ("diverged", "stalled")
    assert res.termination != "converged"
    res_cycle = solve_gd(inst, 1, GdConfig(mu=0.9, max_iters=2000))
    if res_cycle.termination != "converged":
        assert res_cycle.aux["monotone_violations"] > 0


def test_trace_cadence_and_terminal_row():
    rng = make_rng(8, "trace-grid")
    inst = generate_instance(10, 1, 20, "goe", rng)
    cfg = GdConfig(mu=1e-6, max_iters=100, trace_dense_limit=20,
                   trace_stride=7, rel_err_tol=1e-14, stall_tol=0.0)
    res = solve_gd(inst, 1, cfg)
    iters = res.trace[:, 0].astype(int).tolist()
    assert res.termination == "max-iters"
    expect = [k for k in range(101) if k <= 20 or k % 7 == 0]
    if expect[-1] != 100:
        expect.append(100)
    assert iters == expect
    assert len(TRACE_COLUMNS) == res.trace.shape[1] == 5
    # seconds nondecreasing
    assert np.all(np.diff(res.trace[:, 4]) >= 0)


def test_solver_deterministic():
    rng = make_rng(9, "solve-det")
    inst = generate_instance(25, 2, 200, "goe", rng)
    a = solve_gd(inst, 2, GdConfig(mu=0.5, max_iters=500))
    b = solve_gd(inst, 2, GdConfig(mu=0.5, max_iters=500))
    np.testing.assert_array_equal(a.trace[:, :4], b.trace[:, :4])
    np.testing.assert_array_equal(a.Z, b.Z)
    assert a.termination == b.termination


def test_truthless_instance_uses_residual():
    rng = make_rng(10, "solve-blind")
    full = generate_instance(30, 1, 240, "goe", rng)
    blind = Instance(ensemble=full.ensemble, b=full.b)
    res = solve_gd(blind, 1, GdConfig(mu=0.3, max_iters=3000))
    assert res.termination == "converged"
    assert np.isnan(res.trace[:, 2]).all() and np.isnan(res.trace[:, 3]).all()
    w = residuals(res.Z, blind)
    assert np.linalg.norm(w) / np.linalg.norm(blind.b) < 1e-5


def test_auto_rank_finds_planted_rank():
    rng = make_rng(11, "auto-rank")
    inst = generate_instance(30, 2, 300, "goe", rng)
    res, r = solve_gd_auto_rank(inst, GdConfig(mu=0.3, max_iters=3000),
                                max_rank=4)
    assert r == 2
    w = residuals(res.Z, inst)
    assert np.linalg.norm(w) / np.linalg.norm(inst.b) < 1e-5
    rng1 = make_rng(12, "auto-rank-1")
    inst1 = generate_instance(30, 1, 300, "goe", rng1)
    _, r1 = solve_gd_auto_rank(inst1, GdConfig(mu=0.3, max_iters=3000),
                               max_rank=4)
    assert r1 == 1


def test_config_immutable_reuse():
    # one config drives many runs without mutation
    cfg = GdConfig(mu=0.3, max_iters=50)
    before = dataclasses.asdict(cfg)
    rng = make_rng(13, "cfg-reuse")
    inst = generate_instance(12, 1, 60, "goe", rng)
    solve_gd(inst, 1, cfg)
    solve_gd(inst, 1, cfg)
    assert dataclasses.asdict(cfg) == before


def test_monotone_descent_with_tuned_step():
    # The step normalization divides mu by the initialization spectrum sum,
    # so on well-conditioned rank-2 truth the effective per-direction step
    # is about mu/2 and mu=0.8 descends monotonically. Skewed random
    # spectra can push the top direction past the stable step and cycle
    # (see test_oversized_step_diverges_or_cycles), so the planted factor
    # here has equal column norms. 19/20 seeded runs must be violation
    # free; the tracker reports the count per run.
    cfg = GdConfig(mu=0.8, max_iters=2000)
    sides = (40, 80, 120, 160, 200)
    clean = 0
    for i in range(20):
        n = sides[i % len(sides)]
        rng = make_rng(123, "mono", "bal10", i)
        G = rng.standard_normal((n, 2))
        Q, _ = np.linalg.qr(G)
        truth = make_truth(Q * np.sqrt(float(n)))
        ens = generate_ensemble("goe", n, 10 * n, rng)
        inst = Instance(ensemble=ens, b=ens.apply(truth.X), truth=truth)
        res = solve_gd(inst, 2, cfg)
        assert res.termination == "converged"
        clean += res.aux["monotone_violations"] == 0
    assert clean >= 19
