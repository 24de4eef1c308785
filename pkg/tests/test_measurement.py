import numpy as np
import pytest

from matsense.errors import RankError
from matsense.measurement import (Instance, MeasurementEnsemble,
                                  apply_adjoint, apply_operator,
                                  generate_ensemble, generate_instance,
                                  load_instance, make_truth,
                                  sample_bernoulli, sample_goe,
                                  sample_goe_batch, save_instance)
from matsense.rng import make_rng


def test_goe_exactly_symmetric():
    rng = make_rng(0, "goe-sym")
    for n in (1, 2, 7, 33):
        A = sample_goe(n, rng)
        assert A.shape == (n, n)
        np.testing.assert_array_equal(A, A.T)


def test_goe_scalar_variance():
    # n=1: the single entry is the diagonal, variance 2
    rng = make_rng(1, "goe-scalar")
    draws = np.array([sample_goe(1, rng)[0, 0] for _ in range(10 ** 5)])
    assert 1.9 <= draws.var() <= 2.1


def test_goe_entry_variances():
    # off-diagonal unit variance, diagonal variance 2, n=50 over 1e4 draws
    rng = make_rng(2, "goe-var")
    off = np.empty(10 ** 4)
    diag = np.empty(10 ** 4)
    for i in range(100):
        block = sample_goe_batch(50, 100, rng)
        off[i * 100:(i + 1) * 100] = block[:, 1, 2]
        diag[i * 100:(i + 1) * 100] = block[:, 3, 3]
    assert 0.97 <= off.var() <= 1.03
    assert 1.94 <= diag.var() <= 2.06


def test_goe_batch_matches_sequential():
    # one batched draw consumes the stream exactly like repeated single draws
    batch = sample_goe_batch(5, 3, make_rng(3, "goe-seq"))
    rng = make_rng(3, "goe-seq")
    singles = np.stack([sample_goe(5, rng) for _ in range(3)])
    np.testing.assert_array_equal(batch, singles)


def test_goe_rejects_empty_dimension():
    with pytest.raises(ValueError):
        sample_goe(0, make_rng(0, "bad"))


def test_bernoulli_full_density():
    A = sample_bernoulli(4, 1.0, make_rng(4, "ber"))
    np.testing.assert_array_equal(np.asarray(A.todense()), np.ones((4, 4)))


def test_bernoulli_nonzero_count():
    rng = make_rng(5, "ber-count")
    counts = [sample_bernoulli(600, 0.001, rng).nnz for _ in range(100)]
    assert 324 <= np.mean(counts) <= 396


def test_bernoulli_zero_density_limit():
    rng = make_rng(6, "ber-zero")
    A = sample_bernoulli(10, 1e-9, rng)
    assert A.nnz == 0
    ens = MeasurementEnsemble.from_matrices(np.zeros((1, 10, 10)))
    assert ens.apply(np.eye(10))[0] == 0.0


def test_bernoulli_rejects_bad_density():
    for rho in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            sample_bernoulli(5, rho, make_rng(0, "bad-rho"))


def test_bernoulli_values_binary_and_unsymmetrized():
    rng = make_rng(7, "ber-binary")
    ens = generate_ensemble("bernoulli", 40, 30, rng, rho=0.05)
    dense = ens.to_dense()
    assert set(np.unique(dense)) <= {0.0, 1.0}
    # i.i.d. entries over the full square: some draw must be asymmetric
    assert any(not np.array_equal(dense[i], dense[i].T) for i in range(30))


def test_bernoulli_count_concentration():
    # 5 sigma binomial band on the total stored nonzeros
    rng = make_rng(8, "ber-conc")
    n, m, rho = 80, 25, 0.05
    ens = generate_ensemble("bernoulli", n, m, rng, rho=rho)
    expected = rho * n * n
    assert expected >= 100
    band = 5.0 * np.sqrt(expected)
    for i in range(m):
        nnz = ens.matrix(i).nnz
        assert abs(nnz - expected) <= band


def test_apply_identity_trace():
    ens = MeasurementEnsemble.from_matrices(np.eye(2)[None])
    np.testing.assert_allclose(ens.apply(np.eye(2)), [2.0])


def test_apply_hand_computed():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    X = np.ones((2, 2))
    ens = MeasurementEnsemble.from_matrices(A[None])
    np.testing.assert_allclose(ens.apply(X), [2.0])


def test_adjoint_identity_dense_and_sparse():
    for kind, rho in (("goe", None), ("bernoulli", 0.05)):
        rng = make_rng(9, "adj", kind)
        ens = generate_ensemble(kind, 25, 12, rng, rho=rho)
        x = make_rng(9, "adj-x", kind).standard_normal((25, 25))
        X = 0.5 * (x + x.T)
        alpha = make_rng(9, "adj-a", kind).standard_normal(12)
        lhs = float(ens.apply(X) @ alpha)
        rhs = float(np.sum(X * ens.apply_adjoint(alpha)))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(X) * np.linalg.norm(alpha)


def test_adjoint_selects_single_matrix():
    rng = make_rng(10, "adj-sel")
    ens = generate_ensemble("goe", 8, 4, rng)
    e1 = np.zeros(4)
    e1[0] = 1.0
    np.testing.assert_array_equal(ens.apply_adjoint(e1), ens.matrix(0))
    np.testing.assert_array_equal(ens.apply_adjoint(np.zeros(4)),
                                  np.zeros((8, 8)))


def test_adjoint_matches_naive_sum():
    rng = make_rng(11, "adj-naive")
    ens = generate_ensemble("goe", 10, 3, rng)
    alpha = make_rng(11, "adj-naive-a").standard_normal(3)
    naive = np.zeros((10, 10))
    for i in range(3):
        naive += alpha[i] * ens.matrix(i)
    np.testing.assert_allclose(ens.apply_adjoint(alpha), naive, atol=1e-14)


def test_free_function_wrappers():
    rng = make_rng(12, "wrap")
    ens = generate_ensemble("goe", 6, 5, rng)
    X = np.eye(6)
    alpha = np.arange(5.0)
    np.testing.assert_array_equal(apply_operator(ens, X), ens.apply(X))
    np.testing.assert_array_equal(apply_adjoint(ens, alpha),
                                  ens.apply_adjoint(alpha))


def test_sparse_dense_paths_agree():
    rng = make_rng(13, "sparse-dense")
    ens = generate_ensemble("bernoulli", 30, 15, rng, rho=0.1)
    dense = MeasurementEnsemble.from_matrices(ens.to_dense())
    x = make_rng(13, "sd-x").standard_normal((30, 30))
    X = 0.5 * (x + x.T)
    alpha = make_rng(13, "sd-a").standard_normal(15)
    np.testing.assert_allclose(ens.apply(X), dense.apply(X),
                               rtol=0, atol=1e-13 * np.linalg.norm(X))
    np.testing.assert_allclose(ens.apply_adjoint(alpha),
                               dense.apply_adjoint(alpha),
                               rtol=0, atol=1e-13 * np.linalg.norm(alpha))


def test_goe_second_moment_oracle():
    # (1/m) sum (x' A x) A concentrates at 2 x x' for unit x
    n, m = 20, 10 ** 4
    rng = make_rng(14, "moment")
    x = np.zeros(n)
    x[0] = 1.0
    acc = np.zeros((n, n))
    left = m
    while left:
        take = min(left, 500)
        A = sample_goe_batch(n, take, rng)
        t = A @ x
        acc += np.tensordot(t @ x, A, axes=(0, 0))
        left -= take
    target = 2.0 * np.outer(x, x)
    dev = np.linalg.norm(acc / m - target) / np.linalg.norm(target)
    assert dev < 0.15


def test_generate_instance_consistency():
    rng = make_rng(15, "inst")
    inst = generate_instance(12, 2, 30, "goe", rng)
    assert inst.n == 12 and inst.m == 30
    b = inst.ensemble.apply(inst.truth.X)
    assert np.linalg.norm(b - inst.b) <= 1e-12 * np.linalg.norm(inst.b)
    sigma = inst.truth.sigma
    assert (sigma > 0).all()
    assert (np.diff(sigma) <= 0).all()
    assert inst.truth.kappa >= 1.0


def test_generate_instance_deterministic():
    a = generate_instance(9, 1, 14, "goe", make_rng(16, "det"))
    b = generate_instance(9, 1, 14, "goe", make_rng(16, "det"))
    np.testing.assert_array_equal(a.b, b.b)
    np.testing.assert_array_equal(a.truth.Z, b.truth.Z)
    np.testing.assert_array_equal(a.ensemble.to_dense(), b.ensemble.to_dense())


def test_generate_instance_rejects_bad_rank():
    with pytest.raises(RankError):
        generate_instance(4, 5, 10, "goe", make_rng(17, "bad-rank"))


def test_make_truth_orders_sigma():
    Z = make_rng(18, "truth").standard_normal((10, 3))
    truth = make_truth(Z)
    np.testing.assert_allclose(truth.X, Z @ Z.T, atol=1e-12)
    assert truth.sigma.shape == (3,)
    assert (np.diff(truth.sigma) <= 0).all()


def test_save_load_round_trip_dense(tmp_path):
    inst = generate_instance(8, 2, 11, "goe", make_rng(19, "io-dense"),
                             seed=19)
    save_instance(inst, tmp_path / "inst")
    back = load_instance(tmp_path / "inst")
    np.testing.assert_array_equal(back.b, inst.b)
    np.testing.assert_array_equal(back.truth.Z, inst.truth.Z)
    np.testing.assert_array_equal(back.truth.sigma, inst.truth.sigma)
    np.testing.assert_array_equal(back.ensemble.to_dense(),
                                  inst.ensemble.to_dense())
    assert back.ensemble.kind == inst.ensemble.kind
    assert back.seed == 19


def test_save_load_round_trip_sparse(tmp_path):
    inst = generate_instance(40, 1, 9, "bernoulli", make_rng(20, "io-sparse"),
                             rho=0.02)
    save_instance(inst, tmp_path / "inst")
    back = load_instance(tmp_path / "inst")
    np.testing.assert_array_equal(back.b, inst.b)
    assert back.ensemble.is_sparse
    assert back.ensemble.rho == 0.02
    d0 = inst.ensemble.to_dense()
    d1 = back.ensemble.to_dense()
    np.testing.assert_array_equal(d0, d1)


def test_save_load_without_truth(tmp_path):
    base = generate_instance(6, 1, 5, "goe", make_rng(21, "io-notruth"))
    blind = Instance(ensemble=base.ensemble, b=base.b, truth=None)
    save_instance(blind, tmp_path / "inst")
    back = load_instance(tmp_path / "inst")
    assert back.truth is None
    np.testing.assert_array_equal(back.b, base.b)
