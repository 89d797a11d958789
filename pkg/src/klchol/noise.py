"""Additive diagonal noise: ``Sigma = Theta + R``.

With ``Theta^{-1} ~ L L^T`` we have ``Sigma ~ (L L^T)^{-1} (R^{-1} + L L^T) R``.
The middle factor is sparse; it is factored by zero fill-in incomplete
Cholesky and used as a preconditioner for conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .factor import FactorizationError, SparseFactor
from .sparsity import SparsityPattern

PRECON_PATTERNS = ("L", "LLT", "exact")


class ConvergenceError(ArithmeticError):
    def __init__(self, msg, residual, iterations):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


def ichol(values: np.ndarray, pattern: SparsityPattern) -> SparseFactor:
    """Zero fill-in incomplete Cholesky.

    ``values`` holds the lower triangle of a symmetric matrix on ``pattern``
    (aligned with ``pattern.indices``).  The result agrees with ``A`` on every
    pattern entry: ``(L L^T)_{ij} = A_{ij}`` for ``(i, j)`` in the pattern.
    """
    n = pattern.n
    off = pattern.offsets
    idx = pattern.indices
    values = np.asarray(values, dtype=float)
    out = np.zeros(pattern.nnz)
    # row view: for each row i, the (column, entry) pairs with column < i
    rows, cols = pattern.entries()
    strict = rows != cols
    csr = sp.csr_matrix((np.flatnonzero(strict) + 1, (rows[strict], cols[strict])), shape=(n, n))
    work = np.zeros(n)
    for j in range(n):
        a, b = off[j], off[j + 1]
        s = idx[a:b]
        ra, rb = csr.indptr[j], csr.indptr[j + 1]
        d = values[a:b].copy()
        if rb > ra:
            ms = csr.indices[ra:rb]
            ljm = out[csr.data[ra:rb] - 1]
            touched = []
            for m, c in zip(ms.tolist(), ljm.tolist()):
                # rows of column m from j onwards
                ma, mb = off[m], off[m + 1]
                rm = idx[ma:mb]
                lo = int(np.searchsorted(rm, j))
                sel = slice(ma + lo, mb)
                work[idx[sel]] += c * out[sel]
                touched.append(idx[sel])
            d -= work[s]
            work[np.concatenate(touched)] = 0.0
        piv = d[0]
        if not piv > 0:
            raise FactorizationError(f"nonpositive pivot {piv:.3e} at column {j}", column=j)
        r = math.sqrt(piv)
        out[a:b] = d / r
        out[a] = r
    return SparseFactor(pattern, out)


def _lower_pattern_of(M: sp.spmatrix) -> SparsityPattern:
    M = sp.tril(sp.csc_matrix(M)).tocsc()
    M.sort_indices()
    cols = [M.indices[M.indptr[j] : M.indptr[j + 1]] for j in range(M.shape[0])]
    return SparsityPattern.from_columns(cols)


def symbolic_square(pattern: SparsityPattern) -> SparsityPattern:
    """Lower triangle of the nonzero structure of ``L L^T``."""
    rows, cols = pattern.entries()
    B = sp.csc_matrix((np.ones(len(rows)), (rows, cols)), shape=(pattern.n, pattern.n))
    return _lower_pattern_of(B @ B.T)


def pattern_values(M: sp.spmatrix, pattern: SparsityPattern) -> np.ndarray:
    """Entries of ``M`` at the positions of ``pattern``."""
    rows, cols = pattern.entries()
    return np.asarray(sp.csr_matrix(M)[rows, cols]).reshape(-1)


@dataclass
class NoisyModel:
    """Factor of ``Theta^{-1}``, noise diagonal and preconditioner.

    ``noise`` is stored in elimination positions.
    """

    factor: SparseFactor
    noise: np.ndarray
    precon: SparseFactor
    precon_pattern: str

    @property
    def n(self) -> int:
        return self.factor.n

    def _perm(self):
        o = self.factor.ordering
        return None if o is None else o.perm

    @cached_property
    def _L(self):
        return self.factor.to_csc()

    def apply_middle(self, x: np.ndarray) -> np.ndarray:
        """``(R^{-1} + L L^T) x`` in positions."""
        return x / self.noise + self._L @ (self._L.T @ x)

    def logdet_sigma(self) -> float:
        return (-self.factor.logdet_precision() + self.precon.logdet_precision()
                + float(np.sum(np.log(self.noise))))


def build_noisy_model(factor: SparseFactor, noise, precon_pattern: str = "L") -> NoisyModel:
    """Assemble ``A = L L^T + R^{-1}`` on the chosen pattern and factor it.

    ``noise`` is the diagonal of ``R`` in original index order (or a scalar).
    """
    if precon_pattern not in PRECON_PATTERNS:
        raise ValueError(f"precon_pattern must be one of {PRECON_PATTERNS}")
    n = factor.n
    R = np.broadcast_to(np.asarray(noise, dtype=float), (n,)).copy()
    if np.any(~(R > 0)):
        raise ValueError("noise variances must be positive")
    if factor.ordering is not None:
        R = R[factor.ordering.perm]
    L = factor.to_csc()
    A = (L @ L.T).tocsr() + sp.diags(1.0 / R)
    if precon_pattern == "exact":
        dense = A.toarray()
        try:
            C = sla.cholesky(dense, lower=True)
        except sla.LinAlgError:
            raise FactorizationError("dense Cholesky of R^-1 + L L^T failed") from None
        full = SparsityPattern.full(n)
        rows, cols = full.entries()
        pre = SparseFactor(full, C[rows, cols])
    else:
        pat = factor.pattern if precon_pattern == "L" else symbolic_square(factor.pattern)
        pre = ichol(pattern_values(A, pat), pat)
    pre.ordering = factor.ordering
    return NoisyModel(factor, R, pre, precon_pattern)


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def pcg(apply_A, b: np.ndarray, precon: Optional[SparseFactor] = None, tol: float = 1e-8,
        max_iter: int = 50) -> CGResult:
    """Conjugate gradients with split preconditioner ``P = Lp Lp^T``.

    Stops once ``||Lp^{-1} r|| <= tol * ||Lp^{-1} b||`` (plain residuals
    when ``precon`` is None).  Raises ``ConvergenceError`` after
    ``max_iter`` iterations.
    """
    if precon is None:
        def psolve(r):
            return r
    else:
        Lp = precon.to_csc().tocsr()
        LpT = Lp.T.tocsr()

        def psolve(r):
            w = spsolve_triangular(Lp, r, lower=True)
            return spsolve_triangular(LpT, w, lower=False)

    x = np.zeros_like(b)
    if not np.any(b):
        return CGResult(x, 0, 0.0)
    r = b.copy()
    z = psolve(r)
    rz = float(r @ z)
    stop = tol * math.sqrt(rz)
    p = z.copy()
    res = math.sqrt(rz)
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = psolve(r)
        rz_new = float(r @ z)
        res = math.sqrt(max(rz_new, 0.0))
        if res <= stop:
            return CGResult(x, it, res)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})",
                           res, max_iter)


def solve_sigma(model: NoisyModel, v: np.ndarray, tol: float = 1e-8, max_iter: int = 50,
                precondition: bool = True) -> CGResult:
    """``Sigma^{-1} v = R^{-1} (R^{-1} + L L^T)^{-1} L L^T v`` (original order)."""
    perm = model._perm()
    v = np.asarray(v, dtype=float)
    vp = v if perm is None else v[perm]
    L = model._L
    rhs = L @ (L.T @ vp)
    res = pcg(model.apply_middle, rhs, model.precon if precondition else None, tol, max_iter)
    xp = res.x / model.noise
    if perm is None:
        x = xp
    else:
        x = np.empty_like(xp)
        x[perm] = xp
    return CGResult(x, res.iterations, res.residual)


def noisy_log_likelihood(model: NoisyModel, y: np.ndarray, tol: float = 1e-8, max_iter: int = 50) -> float:
    """``-(y^T Sigma^{-1} y + logdet Sigma + N log 2 pi) / 2``.

    The log-determinant uses the preconditioner's diagonal, so it is exact
    only for ``precon_pattern="exact"``.
    """
    y = np.asarray(y, dtype=float)
    quad = float(y @ solve_sigma(model, y, tol, max_iter).x)
    return -0.5 * (quad + model.logdet_sigma() + model.n * math.log(2 * math.pi))
