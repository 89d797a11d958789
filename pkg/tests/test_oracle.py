"""Dense reference routines, plus values frozen from them."""

import numpy as np
import pytest

from helpers import uniform
from klchol import oracle as O
from klchol.factor import factorize_aggregated, factorize_plain, kl_objective, log_likelihood
from klchol.kernels import KernelModel
from klchol.noise import build_noisy_model
from klchol.ordering import PointSet, reverse_maximin
from klchol.predict import predict_first
from klchol.sparsity import SparsityPattern, aggregate_supernodes, build_pattern

K = KernelModel("matern32", 0.3)


def test_inverse_cholesky_identity():
    assert np.allclose(O.dense_inverse_cholesky(np.eye(4)), np.eye(4))


def test_inverse_cholesky_two_by_two():
    L = O.dense_inverse_cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert L[:, 0] == pytest.approx([1.1547005383792517, -0.5773502691896258], rel=1e-14)


def test_inverse_cholesky_roundtrip_and_matches_full_factor():
    P = PointSet(uniform(50, 2, 1))
    o = reverse_maximin(P)
    T = K.matrix(P.coords, P.coords)
    L = O.dense_inverse_cholesky(T, o)
    Tp = T[np.ix_(o.perm, o.perm)]
    assert np.abs(L @ L.T @ Tp - np.eye(50)).max() <= 1e-8
    F = factorize_plain(K, P, o, SparsityPattern.full(50))
    assert np.abs(F.to_dense() - L).max() <= 1e-8 * np.abs(L).max()
    with pytest.raises(ValueError):
        O.dense_inverse_cholesky(-np.eye(3))


def test_conditional_basics():
    Xt, Xp = uniform(40, 2, 2), uniform(3, 2, 3)
    Xp[0] = Xt[5]
    m, c = O.dense_conditional_kernel(K, Xt, Xp, np.zeros(40))
    assert np.all(m == 0)
    assert abs(c[0, 0]) <= 1e-10
    with pytest.raises(ValueError):
        O.dense_conditional(-np.eye(2), np.ones((2, 1)), np.eye(1), np.ones(2))


def test_conditional_vs_predict_first():
    Xt, Xp = uniform(100, 2, 4), uniform(7, 2, 5)
    y = np.random.default_rng(0).standard_normal(100)
    m, c = O.dense_conditional_kernel(K, Xt, Xp, y)
    r = predict_first(K, Xt, Xp, y, rho=1e9)
    assert np.abs(r.mean - m).max() <= 1e-6 and np.abs(r.covariance - c).max() <= 1e-6


def test_sample_reproducible_and_covariance():
    T = K.matrix(uniform(5, 2, 6), uniform(5, 2, 6))
    assert np.array_equal(O.dense_sample(T, 42), O.dense_sample(T, 42))
    assert not np.array_equal(O.dense_sample(T, 42), O.dense_sample(T, 43))
    Z = O.dense_sample(T, 7, size=10_000)
    S = Z.T @ Z / len(Z)
    assert np.abs(S - T).max() <= 0.05 * np.abs(T).max()
    with pytest.raises(ValueError):
        O.dense_sample(np.zeros((3, 3)), 0)


def test_symmetrized_kl():
    T = K.matrix(uniform(20, 2, 8), uniform(20, 2, 8))
    assert abs(O.symmetrized_kl(T, T)) <= 1e-10
    assert O.symmetrized_kl(T, T + np.eye(20)) > 0
    assert O.symmetrized_kl(T, 2 * T) == pytest.approx(0.25 * 20 * (0.5 + 2) - 10)


def test_noisy_approximation_with_exact_precon():
    P = PointSet(uniform(60, 2, 9))
    o = reverse_maximin(P)
    F = factorize_plain(K, P, o, build_pattern(o, P, 2.0))
    R = np.linspace(0.1, 1.0, 60)
    m = build_noisy_model(F, R, "exact")
    L = F.to_dense()
    that = np.empty((60, 60))
    that[np.ix_(o.perm, o.perm)] = np.linalg.inv(L @ L.T)
    assert np.allclose(O.noisy_approximation(m), that + np.diag(R), atol=1e-9)


def test_stationarity_detects_wrong_factor():
    P = PointSet(uniform(30, 2, 10))
    o = reverse_maximin(P)
    T = K.matrix(P.coords, P.coords)
    F = factorize_plain(K, P, o, build_pattern(o, P, 2.0))
    assert O.stationarity_residual(F, T) <= 1e-8 * np.linalg.norm(T, 2)
    F.values[1] += 0.1
    assert O.stationarity_residual(F, T) > 1e-3


# ------------------------------------------------------------- frozen values
# Computed once from the dense routines above and pinned here.

def test_frozen_philox_draw():
    assert O.dense_sample(np.eye(3), 0) == pytest.approx(
        [-0.2059740286292238, -0.12884495093462758, -0.28978987549091256], rel=1e-15)


def test_frozen_three_point_factor():
    P = PointSet(np.array([0.0, 0.4, 1.0]))
    o = reverse_maximin(P)
    k = KernelModel("matern32", 1.0)
    F = factorize_plain(k, P, o, build_pattern(o, P, 1.5))
    expect = [2.5315429617938583, -1.0308899930304127, -1.645135525679824,
              1.1423050086019384, -0.552141949753027, 1.0]
    assert F.values == pytest.approx(expect, rel=1e-12)
    assert F.to_dense() == pytest.approx(O.dense_inverse_cholesky(k.matrix(P.coords, P.coords), o), rel=1e-12)


@pytest.mark.parametrize("rho,kl", [(1, 370.9860822858369), (2, 131.05218484999182), (3, 61.10369577047186)])
def test_frozen_kl_values(rho, kl):
    P = PointSet(uniform(400, 2, 7))
    o = reverse_maximin(P)
    T = K.matrix(P.coords, P.coords)
    F = factorize_aggregated(K, P, o, aggregate_supernodes(build_pattern(o, P, rho), o, 1.5))
    assert kl_objective(F, T) == pytest.approx(kl, rel=1e-8)


def test_frozen_log_likelihood():
    P = PointSet(uniform(400, 2, 7))
    o = reverse_maximin(P)
    y = O.dense_sample(K.matrix(P.coords, P.coords), 1)
    F = factorize_plain(K, P, o, build_pattern(o, P, 2.0))
    assert log_likelihood(F, y) == pytest.approx(285.5303294160421, rel=1e-10)
