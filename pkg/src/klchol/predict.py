"""Gaussian-process prediction with sparse inverse Cholesky factors.

Three strategies:

* ``predict_first``: prediction points are eliminated first, so each
  prediction only sees nearby training data; posterior mean and covariance
  come from triangular solves with the leading block of the joint factor.
* ``predict_last_batched``: prediction points are eliminated last, one batch
  at a time.  The supernode factorizations of the training covariance are
  computed once and reused for every batch through low-rank updates.
* ``predict_streaming``: the training factor is generated supernode by
  supernode and discarded right away; only ``L^T y`` and
  ``L^T Theta_{Tr,Pr}`` are accumulated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import spsolve_triangular

from ._parallel import pmap
from .factor import FactorizationError, factorize_aggregated, reverse_cholesky, supernode_columns
from .kernels import KernelModel
from .ordering import PointSet, joint_ordering_prediction_first, reverse_maximin
from .sparsity import aggregate_supernodes, build_pattern


@dataclass
class PredictionResult:
    """Posterior mean and covariance at the prediction points.

    Arrays are in the caller's prediction-point order.  ``covariance`` is
    the full matrix when the method provides it; batched prediction fills
    ``batches`` and ``batch_covariances`` instead.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: Optional[np.ndarray] = None
    batches: Optional[List[np.ndarray]] = None
    batch_covariances: Optional[List[np.ndarray]] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(self.variance, 0.0, None))


def _as_points(p) -> PointSet:
    return p if isinstance(p, PointSet) else PointSet(p)


def predict_first(kernel: KernelModel, train, pred, y, rho: float = 3.0, lam: float = 1.5,
                  threads: int = 1, jitter: float = 0.0, covariance: bool = True) -> PredictionResult:
    """Prediction with the prediction points ordered before the training points."""
    train, pred = _as_points(train), _as_points(pred)
    y = np.asarray(y, dtype=float)
    t0 = time.perf_counter()
    order, joint = joint_ordering_prediction_first(train, pred)
    pattern = build_pattern(order, joint, rho, threads)
    part = aggregate_supernodes(pattern, order, lam)
    F = factorize_aggregated(kernel, joint, order, part, threads, jitter)
    npr, ntr = len(pred), len(train)
    L = F.to_csc()
    Lpp = L[:npr, :npr].tocsr()
    Ltp = L[npr:, :npr]
    ypos = y[order.perm[npr:]]
    rhs = np.asarray(Ltp.T @ ypos).reshape(-1)
    mean_pos = -spsolve_triangular(Lpp.T.tocsr(), rhs, lower=False)
    back = order.perm[:npr] - ntr  # position -> prediction index
    mean = np.empty(npr)
    mean[back] = mean_pos
    W = spsolve_triangular(Lpp, np.eye(npr), lower=True)
    var = np.empty(npr)
    var[back] = np.einsum("ij,ij->j", W, W)
    cov = None
    if covariance:
        cov = np.empty((npr, npr))
        cov[np.ix_(back, back)] = W.T @ W
    diag = {"nnz": F.nnz, "n_supernodes": part.n_supernodes,
            "wall_time_ms": 1e3 * (time.perf_counter() - t0)}
    return PredictionResult(mean, var, cov, diagnostics=diag)


def _training_structure(train: PointSet, rho, lam, threads):
    order = reverse_maximin(train)
    pattern = build_pattern(order, train, rho, threads)
    part = aggregate_supernodes(pattern, order, lam)
    return order, pattern, part


def make_batches(n: int, batch_size: int = 1) -> List[np.ndarray]:
    return [np.arange(a, min(a + batch_size, n)) for a in range(0, n, max(1, batch_size))]


def predict_last_batched(kernel: KernelModel, train, pred, y, rho: float = 3.0, lam: float = 1.5,
                         batches=None, batch_size: int = 1, threads: int = 1,
                         jitter: float = 0.0) -> PredictionResult:
    """Prediction with each batch of prediction points ordered after all
    training points.

    ``batches`` is a partition of ``range(len(pred))``; by default batches of
    ``batch_size`` consecutive points are used.
    """
    train, pred = _as_points(train), _as_points(pred)
    y = np.asarray(y, dtype=float)
    npr = len(pred)
    if batches is None:
        batches = make_batches(npr, batch_size)
    batches = [np.asarray(b, dtype=np.intp) for b in batches]
    flat = np.sort(np.concatenate(batches)) if batches else np.zeros(0, np.intp)
    if not np.array_equal(flat, np.arange(npr)):
        raise ValueError("batches must partition the prediction points")
    t0 = time.perf_counter()
    order, pattern, part = _training_structure(train, rho, lam, threads)
    X = train.coords[order.perm]
    ypos = y[order.perm]

    # per supernode: reversed Cholesky factor and transformed data, reused by every batch
    def prep(t):
        kids = part.children(t)
        rev = kids[::-1]
        Lr = reverse_cholesky(kernel.matrix(X[rev], X[rev]), jitter, t)
        ytil = sla.solve_triangular(Lr, ypos[rev], lower=True, check_finite=False)[::-1]
        pos = np.searchsorted(kids, part.parents(t))
        return kids, Lr, ytil, part.parents(t), pos

    supers = pmap(prep, range(part.n_supernodes), threads)

    mean = np.empty(npr)
    var = np.empty(npr)
    covs = []
    for bi, b in enumerate(batches):
        Xb = pred.coords[b]
        nb = len(b)
        Tbb = kernel.matrix(Xb, Xb)
        try:
            cbb = sla.cho_factor(Tbb, lower=True)
        except sla.LinAlgError:
            raise FactorizationError(f"prediction block of batch {bi} is not positive definite") from None
        Tbb_inv = sla.cho_solve(cbb, np.eye(nb))

        def contrib(item, Xb=Xb, Tbb=Tbb, cbb=cbb, bi=bi):
            kids, Lr, ytil, par, pos = item
            rev = kids[::-1]
            B = sla.solve_triangular(Lr, kernel.matrix(X[rev], Xb), lower=True, check_finite=False)[::-1]
            P = np.zeros((nb, nb))
            m = np.zeros(nb)
            for k, p in zip(par, pos):
                Bs = B[p:]
                G = Tbb - Bs.T @ Bs
                try:
                    g = sla.cho_factor(G, lower=True)
                except sla.LinAlgError:
                    raise FactorizationError(
                        f"singular update in batch {bi} at column {k}", column=int(k)) from None
                v = Bs @ sla.cho_solve(g, B[p])
                c = math.sqrt(1.0 + v[0])
                w = v.copy()
                w[0] += 1.0
                lbk = -sla.cho_solve(cbb, Bs.T @ w) / c
                P += np.outer(lbk, lbk)
                m += lbk * (float(ytil[p:] @ w) / c)
            return P, m

        parts = pmap(contrib, supers, threads)
        P = Tbb_inv.copy()
        m = np.zeros(nb)
        for Pt, mt in parts:
            P += Pt
            m += mt
        cp = sla.cho_factor(P, lower=True)
        C = sla.cho_solve(cp, np.eye(nb))
        C = 0.5 * (C + C.T)
        mean[b] = -C @ m
        var[b] = np.diag(C)
        covs.append(C)
    diag = {"nnz": int(sum((len(s[0]) - s[4]).sum() for s in supers)), "n_supernodes": part.n_supernodes,
            "n_batches": len(batches), "wall_time_ms": 1e3 * (time.perf_counter() - t0)}
    return PredictionResult(mean, var, None, batches, covs, diag)


def predict_training_factor(kernel: KernelModel, train, pred, y, rho: float = 3.0, lam: float = 1.5,
                            threads: int = 1, jitter: float = 0.0) -> PredictionResult:
    """In-memory counterpart of :func:`predict_streaming`: materializes the
    training factor ``L`` and uses ``Theta_{Tr,Tr}^{-1} ~ L L^T``."""
    train, pred = _as_points(train), _as_points(pred)
    y = np.asarray(y, dtype=float)
    order, pattern, part = _training_structure(train, rho, lam, threads)
    F = factorize_aggregated(kernel, train, order, part, threads, jitter)
    L = F.to_csc()
    X = train.coords[order.perm]
    B = np.asarray(L.T @ kernel.matrix(X, pred.coords))
    z = L.T @ y[order.perm]
    cov = kernel.matrix(pred.coords, pred.coords) - B.T @ B
    return PredictionResult(B.T @ z, np.diag(cov).copy(), cov,
                            diagnostics={"nnz": F.nnz, "factor_bytes": F.values.nbytes})


def predict_streaming(kernel: KernelModel, train, pred, y, rho: float = 3.0, lam: float = 1.5,
                      threads: int = 1, jitter: float = 0.0) -> PredictionResult:
    """Posterior mean and covariance without ever storing the training factor.

    Each supernode produces its columns of ``L``, folds them into ``L^T y``,
    the log-determinant and ``L^T Theta_{Tr,Pr}``, and drops them.  At most
    ``threads`` supernodes are in flight at a time; the peak number of factor
    bytes alive is reported in ``diagnostics["peak_factor_bytes"]``.
    """
    train, pred = _as_points(train), _as_points(pred)
    y = np.asarray(y, dtype=float)
    t0 = time.perf_counter()
    order, pattern, part = _training_structure(train, rho, lam, threads)
    X = train.coords[order.perm]
    ypos = y[order.perm]
    Xp = pred.coords
    npr = len(pred)

    def work(t):
        kids = part.children(t)
        rev = kids[::-1]
        Lr = reverse_cholesky(kernel.matrix(X[rev], X[rev]), jitter, t)
        par = part.parents(t)
        pos = np.searchsorted(kids, par)
        cols = supernode_columns(Lr, pos)
        nbytes = sum(c.nbytes for c in cols)
        Tsp = kernel.matrix(X[kids], Xp)
        zz = np.empty(len(par))
        Bt = np.empty((len(par), npr))
        logdiag = 0.0
        for a, (p, col) in enumerate(zip(pos, cols)):
            zz[a] = col @ ypos[kids[p:]]
            Bt[a] = col @ Tsp[p:]
            logdiag += math.log(col[0])
        return zz, Bt, logdiag, nbytes, int((len(kids) - pos).sum())

    mean = np.zeros(npr)
    BtB = np.zeros((npr, npr))
    quad = 0.0
    logdet_prec = 0.0
    peak = 0
    nnz = 0
    wave = max(1, threads)
    for a in range(0, part.n_supernodes, wave):
        outs = pmap(work, range(a, min(a + wave, part.n_supernodes)), threads)
        peak = max(peak, sum(o[3] for o in outs))
        for zz, Bt, logdiag, _, cnt in outs:
            nnz += cnt
            mean += zz @ Bt
            BtB += Bt.T @ Bt
            quad += float(zz @ zz)
            logdet_prec += 2.0 * logdiag
    cov = kernel.matrix(Xp, Xp) - BtB
    ntr = len(train)
    loglik = -0.5 * (quad - logdet_prec + ntr * math.log(2 * math.pi))
    diag = {"peak_factor_bytes": peak, "nnz": nnz, "log_likelihood": loglik,
            "wall_time_ms": 1e3 * (time.perf_counter() - t0)}
    return PredictionResult(mean, np.diag(cov).copy(), cov, diagnostics=diag)
