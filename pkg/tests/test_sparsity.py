import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import grid, uniform
from klchol.kernels import pairwise_distances
from klchol.ordering import PointSet, box_boundary, reverse_maximin
from klchol.sparsity import (PatternError, SparsityPattern, aggregate_supernodes, aggregated_pattern,
                             build_pattern, check_partition, implied_column_pattern, pattern_from_children)


def brute_pattern(P, o, rho):
    X = P.coords[o.perm]
    ell = o.position_lengthscales
    D = pairwise_distances(X, X)
    return [np.concatenate([[j], [i for i in range(j + 1, len(X)) if D[i, j] <= rho * ell[j]]]).astype(int)
            for j in range(len(X))]


def test_dense_limit():
    P = PointSet(uniform(30, 2, 1))
    S = build_pattern(reverse_maximin(P), P, 1e9)
    assert S.nnz == 30 * 31 // 2
    S.check()


def test_three_collinear_points():
    P = PointSet(np.array([0.0, 0.4, 1.0]))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 1.5)
    # position 0 holds x=0.4 with l=0.4, radius 0.6
    assert o.perm[0] == 1
    assert S.column(0).tolist() == [0, 1, 2]


def test_rho_one_keeps_diagonal_and_rejects_smaller():
    P = PointSet(uniform(40, 2, 2))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 1.0)
    assert all(S.column(j)[0] == j for j in range(40))
    with pytest.raises(PatternError):
        build_pattern(o, P, 0.99)


@given(st.integers(1, 70), st.integers(1, 3), st.floats(1, 4), st.integers(0, 10**6), st.booleans())
def test_pattern_matches_definition(n, d, rho, seed, boundary):
    P = PointSet(uniform(n, d, seed), box_boundary(0, 1) if boundary else None)
    o = reverse_maximin(P)
    S = build_pattern(o, P, rho)
    S.check()
    ref = brute_pattern(P, o, rho)
    assert all(np.array_equal(S.column(j), ref[j]) for j in range(n))


@pytest.mark.parametrize("rho", [1.0, 1.5, 2.0])
def test_pattern_from_children_matches(rho):
    P = PointSet(uniform(300, 2, 3))
    o, children, rho_alg = reverse_maximin(P, rho=2.0, return_children=True)
    a = build_pattern(o, P, rho)
    b = pattern_from_children(o, children, rho)
    assert np.array_equal(a.offsets, b.offsets) and np.array_equal(a.indices, b.indices)


def test_pattern_thread_independent():
    P = PointSet(uniform(2000, 2, 4))
    o = reverse_maximin(P)
    a = build_pattern(o, P, 2.5, threads=1)
    for t in (2, 8):
        b = build_pattern(o, P, 2.5, threads=t)
        assert np.array_equal(a.indices, b.indices) and np.array_equal(a.offsets, b.offsets)


def test_nnz_per_point_is_stable():
    ratios = []
    for n in (1000, 4000, 16000):
        P = PointSet(uniform(n, 2, 0))
        ratios.append(build_pattern(reverse_maximin(P), P, 2.0).nnz / n)
    assert max(ratios) / min(ratios) < 1.25


def test_lambda_one_gives_singletons():
    P = PointSet(uniform(100, 2, 5))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 2.0)
    part = aggregate_supernodes(S, o, 1.0)
    assert part.n_supernodes == 100
    for t in range(100):
        assert part.parents(t).tolist() == [t]
        assert np.array_equal(part.children(t), np.sort(S.column(t)))
        assert np.array_equal(implied_column_pattern(part, t), S.column(t))
    check_partition(S, o, part)


def test_lambda_below_one_rejected():
    P = PointSet(uniform(10, 2, 5))
    o = reverse_maximin(P)
    with pytest.raises(PatternError):
        aggregate_supernodes(build_pattern(o, P, 2.0), o, 0.5)


def test_fully_connected_single_supernode():
    P = PointSet(np.array([0.45, 0.5, 0.55]), box_boundary(0.0, 1.0))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 100.0)
    part = aggregate_supernodes(S, o, 20.0)
    assert part.n_supernodes == 1
    assert part.parents(0).tolist() == [0, 1, 2]


def test_grid_partition_invariants():
    P = PointSet(grid(20))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 2.0)
    part = aggregate_supernodes(S, o, 1.5)
    check_partition(S, o, part)
    assert part.n_supernodes < 400
    # storage reuse: sum of squared supernode sizes vs squared column sizes (measured 1.21)
    ratio = part.block_cost() / float((S.column_sizes().astype(np.int64) ** 2).sum())
    assert ratio <= 1.5
    A = aggregated_pattern(part)
    assert A.contains(S)
    A.check()


def test_implied_pattern_two_parents():
    P = PointSet(grid(20))
    o = reverse_maximin(P)
    S = build_pattern(o, P, 2.0)
    part = aggregate_supernodes(S, o, 1.5)
    t = next(t for t in range(part.n_supernodes) if len(part.parents(t)) >= 2)
    k0, k1 = part.parents(t)[0], part.parents(t)[-1]
    c0 = implied_column_pattern(part, k0)
    assert set(S.column(k0)) <= set(c0)
    assert set(S.column(k1)) <= set(c0) | {k1}
    kids = part.children(t)
    assert np.array_equal(implied_column_pattern(part, k1), kids[np.searchsorted(kids, k1):])


def test_unassigned_column_raises():
    P = PointSet(uniform(10, 2, 5))
    o = reverse_maximin(P)
    part = aggregate_supernodes(build_pattern(o, P, 2.0), o, 1.5)
    part.assignment[3] = -1
    with pytest.raises(PatternError):
        implied_column_pattern(part, 3)


def test_check_rejects_bad_pattern():
    with pytest.raises(PatternError):
        SparsityPattern.from_columns([np.array([1, 0]), np.array([1])]).check()
    with pytest.raises(PatternError):
        SparsityPattern.from_columns([np.array([0, 2, 1]), np.array([1, 2]), np.array([2])]).check()


@given(st.integers(2, 120), st.floats(1, 3.5), st.floats(1, 3), st.integers(0, 10**6))
def test_partition_property(n, rho, lam, seed):
    P = PointSet(uniform(n, 2, seed))
    o = reverse_maximin(P)
    S = build_pattern(o, P, rho)
    part = aggregate_supernodes(S, o, lam)
    check_partition(S, o, part)
    assert aggregated_pattern(part).contains(S)
