"""KL-optimal sparse inverse Cholesky factors.

A factor ``L`` is lower triangular in the elimination order and approximates
``Theta^{-1} = L L^T``.  Column ``k`` is supported on a row set ``s_k`` that
starts with ``k`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._parallel import chunks, pmap
from .kernels import KernelModel
from .ordering import Ordering, PointSet
from .sparsity import SparsityPattern, SupernodePartition, aggregated_pattern


class FactorizationError(ArithmeticError):
    """Cholesky breakdown of a column or supernode block."""

    def __init__(self, msg, column=None, supernode=None):
        super().__init__(msg)
        self.column = column
        self.supernode = supernode


@dataclass
class SparseFactor:
    """Column-compressed lower-triangular factor in elimination positions."""

    pattern: SparsityPattern
    values: np.ndarray
    ordering: Optional[Ordering] = None

    @property
    def n(self) -> int:
        return self.pattern.n

    @property
    def nnz(self) -> int:
        return self.pattern.nnz

    def column(self, k: int):
        a, b = self.pattern.offsets[k], self.pattern.offsets[k + 1]
        return self.pattern.indices[a:b], self.values[a:b]

    def diag(self) -> np.ndarray:
        return self.values[self.pattern.offsets[:-1]]

    def to_csc(self) -> sp.csc_matrix:
        n = self.n
        return sp.csc_matrix((self.values, self.pattern.indices, self.pattern.offsets), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.to_csc().toarray()

    def logdet_precision(self) -> float:
        """``log det(L L^T)``."""
        return 2.0 * float(np.sum(np.log(self.diag())))

    def triplets(self):
        """``(row, col, value)`` with 1-based positions."""
        rows, cols = self.pattern.entries()
        return rows + 1, cols + 1, self.values


def _chol_lower(block, jitter, where):
    try:
        return sla.cholesky(block, lower=True, check_finite=False)
    except sla.LinAlgError:
        if not jitter:
            raise FactorizationError(f"Cholesky breakdown at {where}", **_loc(where)) from None
    shifted = block + (jitter * float(np.mean(np.diag(block)))) * np.eye(block.shape[0])
    try:
        return sla.cholesky(shifted, lower=True, check_finite=False)
    except sla.LinAlgError:
        raise FactorizationError(f"Cholesky breakdown at {where} after jitter", **_loc(where)) from None


def _loc(where):
    kind, idx = where.split(" ")
    return {"column": int(idx)} if kind == "column" else {"supernode": int(idx)}


def kl_column(theta_block: np.ndarray, jitter: float = 0.0, column: int = 0) -> np.ndarray:
    """``Theta^{-1} e_1 / sqrt(e_1^T Theta^{-1} e_1)`` for a block whose first
    row/column belongs to the diagonal entry.

    Uses one Cholesky factorization and two triangular solves.
    """
    theta_block = np.asarray(theta_block, dtype=float)
    C = _chol_lower(theta_block, jitter, f"column {column}")
    e1 = np.zeros(C.shape[0])
    e1[0] = 1.0
    w = sla.solve_triangular(C, e1, lower=True, check_finite=False)
    x = sla.solve_triangular(C, w, lower=True, trans="T", check_finite=False)
    return x / math.sqrt(float(w @ w))


def factorize_plain(kernel: KernelModel, points: PointSet, ordering: Ordering,
                    pattern: SparsityPattern, threads: int = 1, jitter: float = 0.0) -> SparseFactor:
    """One dense solve per column."""
    X = points.coords[ordering.perm]
    values = np.empty(pattern.nnz)
    off = pattern.offsets

    def work(span):
        for k in range(*span):
            s = pattern.column(k)
            values[off[k] : off[k + 1]] = kl_column(kernel.matrix(X[s], X[s]), jitter, k)

    pmap(work, chunks(pattern.n), threads)
    return SparseFactor(pattern, values, ordering)


def reverse_cholesky(block_reversed: np.ndarray, jitter=0.0, supernode=0) -> np.ndarray:
    """Lower Cholesky factor of a block assembled in reversed index order.

    If ``Lr`` is returned, ``U = Lr[::-1, ::-1]`` is upper triangular with
    ``Theta = U U^T`` on the original index order.
    """
    return _chol_lower(block_reversed, jitter, f"supernode {supernode}")


def supernode_columns(Lr: np.ndarray, positions: np.ndarray):
    """Columns ``U^{-T} e_p`` for the given positions, as a list of arrays
    supported on positions ``p..m-1``."""
    m = Lr.shape[0]
    q = m - 1 - np.asarray(positions)
    E = np.zeros((m, len(q)))
    E[q, np.arange(len(q))] = 1.0
    Z = sla.solve_triangular(Lr, E, lower=True, trans="T", check_finite=False)
    return [Z[: qq + 1, a][::-1] for a, qq in enumerate(q)]


def factorize_aggregated(kernel: KernelModel, points: PointSet, ordering: Ordering,
                         partition: SupernodePartition, threads: int = 1,
                         jitter: float = 0.0) -> SparseFactor:
    """One reverse-ordered Cholesky factorization per supernode, shared by
    all of its parent columns."""
    X = points.coords[ordering.perm]
    pattern = aggregated_pattern(partition)
    values = np.empty(pattern.nnz)
    off = pattern.offsets

    def work(span):
        for t in range(*span):
            kids = partition.children(t)
            rev = kids[::-1]
            Lr = reverse_cholesky(kernel.matrix(X[rev], X[rev]), jitter, t)
            par = partition.parents(t)
            pos = np.searchsorted(kids, par)
            for k, col in zip(par, supernode_columns(Lr, pos)):
                values[off[k] : off[k + 1]] = col

    pmap(work, chunks(partition.n_supernodes, 64), threads)
    return SparseFactor(pattern, values, ordering)


def kl_divergence_dense(theta1: np.ndarray, theta2: np.ndarray) -> float:
    """``KL(N(0, theta1) || N(0, theta2))`` for dense SPD matrices."""
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    if theta1.shape != theta2.shape:
        raise ValueError("size mismatch")
    try:
        c1 = sla.cho_factor(theta1, lower=True)
        c2 = sla.cho_factor(theta2, lower=True)
    except sla.LinAlgError:
        raise ValueError("matrices must be symmetric positive definite") from None
    n = theta1.shape[0]
    tr = float(np.trace(sla.cho_solve(c2, theta1)))
    ld1 = 2.0 * float(np.sum(np.log(np.diag(c1[0]))))
    ld2 = 2.0 * float(np.sum(np.log(np.diag(c2[0]))))
    return 0.5 * (tr + ld2 - ld1 - n)


def _position_theta(factor: SparseFactor, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (factor.n, factor.n):
        raise ValueError("size mismatch between factor and theta")
    if factor.ordering is None:
        return theta
    p = factor.ordering.perm
    return theta[np.ix_(p, p)]


def kl_objective(factor: SparseFactor, theta: np.ndarray, method: str = "columns") -> float:
    """``KL(N(0, Theta) || N(0, (L L^T)^{-1}))`` for a dense ``theta``
    indexed by original point index.

    ``method="columns"`` sums ``L_k^T Theta L_k - 2 log L_kk`` over columns;
    ``method="dense"`` forms ``(L L^T)^{-1}`` and uses the generic formula.
    """
    T = _position_theta(factor, theta)
    if method == "dense":
        L = factor.to_dense()
        return kl_divergence_dense(T, sla.cho_solve((L.T, False), np.eye(factor.n)))
    quad = 0.0
    for k in range(factor.n):
        s, v = factor.column(k)
        quad += float(v @ (T[np.ix_(s, s)] @ v))
    ld = 2.0 * float(np.sum(np.log(np.diag(sla.cholesky(T, lower=True)))))
    return 0.5 * (quad - factor.logdet_precision() - ld - factor.n)


def log_likelihood(factor: SparseFactor, y: np.ndarray) -> float:
    """Gaussian log-likelihood of ``y`` (original index order) under
    covariance ``(L L^T)^{-1}``."""
    y = np.asarray(y, dtype=float)
    if factor.ordering is not None:
        y = y[factor.ordering.perm]
    z = factor.to_csc().T @ y
    n = factor.n
    return -0.5 * (float(z @ z) - factor.logdet_precision() + n * math.log(2 * math.pi))
