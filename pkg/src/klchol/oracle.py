"""Dense O(N^3) reference computations, for tests and ``--dense-check``.

Random draws use numpy's Philox counter-based bit generator, so a seed
gives the same sample on every platform.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .factor import SparseFactor, kl_column
from .kernels import KernelModel
from .ordering import Ordering, PointSet, reverse_maximin
from .sparsity import aggregate_supernodes, build_pattern, implied_column_pattern

MAX_DENSE_N = 5000


def _chol(theta, what="matrix"):
    try:
        return sla.cholesky(np.asarray(theta, dtype=float), lower=True)
    except sla.LinAlgError:
        raise ValueError(f"{what} is not positive definite") from None


def dense_inverse_cholesky(theta: np.ndarray, ordering: Ordering = None) -> np.ndarray:
    """Exact lower Cholesky factor of ``Theta^{-1}`` in elimination positions."""
    theta = np.asarray(theta, dtype=float)
    if ordering is not None:
        theta = theta[np.ix_(ordering.perm, ordering.perm)]
    C = _chol(theta)
    inv = sla.cho_solve((C, True), np.eye(theta.shape[0]))
    return _chol(0.5 * (inv + inv.T), "inverse")


def dense_conditional(theta_tt, theta_tp, theta_pp, y):
    """Textbook Gaussian conditional of the prediction block given ``y``."""
    C = _chol(theta_tt, "training covariance")
    mean = theta_tp.T @ sla.cho_solve((C, True), y)
    W = sla.solve_triangular(C, theta_tp, lower=True)
    return mean, theta_pp - W.T @ W


def dense_conditional_kernel(kernel: KernelModel, train, pred, y):
    Xt = train.coords if isinstance(train, PointSet) else np.asarray(train)
    Xp = pred.coords if isinstance(pred, PointSet) else np.asarray(pred)
    return dense_conditional(kernel.matrix(Xt, Xt), kernel.matrix(Xt, Xp), kernel.matrix(Xp, Xp), y)


def dense_sample(theta: np.ndarray, seed: int, size=None) -> np.ndarray:
    """``chol(Theta) z`` with ``z`` standard normal from ``Philox(seed)``.

    ``size`` draws are returned as rows when given.
    """
    C = _chol(theta)
    rng = np.random.Generator(np.random.Philox(seed))
    n = C.shape[0]
    if size is None:
        return C @ rng.standard_normal(n)
    return rng.standard_normal((size, n)) @ C.T


def stationarity_residual(factor: SparseFactor, theta: np.ndarray) -> float:
    """``max |(Theta L)_{ik} - delta_{ik} / L_kk|`` over stored entries."""
    T = np.asarray(theta, dtype=float)
    if factor.ordering is not None:
        T = T[np.ix_(factor.ordering.perm, factor.ordering.perm)]
    worst = 0.0
    for k in range(factor.n):
        s, v = factor.column(k)
        r = T[np.ix_(s, s)] @ v
        r[0] -= 1.0 / v[0]
        worst = max(worst, float(np.abs(r).max()))
    return worst


def symmetrized_kl(sigma: np.ndarray, approx: np.ndarray) -> float:
    """``(KL(sigma||approx) + KL(approx||sigma)) / 2`` for zero-mean Gaussians.

    Only traces enter, so ``approx`` may be a nonsymmetric product of factors.
    """
    n = sigma.shape[0]
    t1 = np.trace(np.linalg.solve(approx, sigma))
    t2 = np.trace(np.linalg.solve(sigma, approx))
    return float(0.25 * (t1 + t2) - 0.5 * n)


def noisy_approximation(model) -> np.ndarray:
    """Dense ``(L L^T)^{-1} Lp Lp^T R`` in original index order."""
    L = model.factor.to_dense()
    Lp = model.precon.to_dense()
    S = np.linalg.solve(L @ L.T, Lp @ Lp.T) * model.noise[None, :]
    perm = model.factor.ordering.perm
    out = np.empty_like(S)
    out[np.ix_(perm, perm)] = S
    return out


def predict_last_naive(kernel: KernelModel, train: PointSet, pred: PointSet, y, rho, lam, batches):
    """Per batch, factor the joint matrix with the batch ordered last from
    scratch (one closed-form solve per column) and condition densely on the
    resulting precision."""
    order = reverse_maximin(train)
    part = aggregate_supernodes(build_pattern(order, train, rho), order, lam)
    X = train.coords[order.perm]
    ypos = np.asarray(y, dtype=float)[order.perm]
    ntr = len(train)
    means, covs = [], []
    for b in batches:
        b = np.asarray(b)
        nb = len(b)
        Z = np.vstack([X, pred.coords[b]])
        T = kernel.matrix(Z, Z)
        n = ntr + nb
        L = np.zeros((n, n))
        tail = np.arange(ntr, n)
        for k in range(n):
            s = np.concatenate([implied_column_pattern(part, k), tail]) if k < ntr else np.arange(k, n)
            L[s, k] = kl_column(T[np.ix_(s, s)])
        A = L @ L.T
        Abb = A[ntr:, ntr:]
        cov = np.linalg.inv(Abb)
        means.append(-np.linalg.solve(Abb, A[ntr:, :ntr] @ ypos))
        covs.append(0.5 * (cov + cov.T))
    return means, covs
