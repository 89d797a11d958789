"""Reverse-maximin ordering of point sets."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .kernels import distances_to


class OrderingError(ValueError):
    pass


@dataclass
class PointSet:
    """``N`` points in ``R^d`` with an optional distance-to-boundary callback.

    ``boundary_distance`` maps an ``(n, d)`` array to ``n`` nonnegative
    distances.  ``None`` means the domain has no boundary.
    """

    coords: np.ndarray
    boundary_distance: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[1] < 1:
            raise OrderingError("coords must be an (N, d) array with d >= 1")
        self.coords = np.ascontiguousarray(c)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def boundary_distances(self) -> np.ndarray:
        if self.boundary_distance is None:
            return np.full(len(self), np.inf)
        d = np.asarray(self.boundary_distance(self.coords), dtype=float).reshape(-1)
        if d.shape[0] != len(self) or np.any(d < 0):
            raise OrderingError("boundary_distance must return N nonnegative values")
        return d


def box_boundary(lo: float, hi: float) -> Callable[[np.ndarray], np.ndarray]:
    """Distance to the faces of the box ``[lo, hi]^d``."""

    def dist(X):
        X = np.atleast_2d(X)
        return np.minimum(X - lo, hi - X).min(axis=1).clip(min=0.0)

    return dist


@dataclass
class Ordering:
    """A permutation of the points together with their length scales.

    ``perm[k]`` is the original index of the point at position ``k`` (0-based,
    first to last in the elimination order).  ``lengthscales`` is indexed by
    original index.  In joint orderings the first ``n_pred`` positions hold
    prediction points.
    """

    perm: np.ndarray
    lengthscales: np.ndarray
    n_pred: int = 0
    parent_fallbacks: int = field(default=0, compare=False)

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.intp)
        self.lengthscales = np.asarray(self.lengthscales, dtype=float)

    def __len__(self):
        return self.perm.shape[0]

    @property
    def inv_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.shape[0])
        return inv

    @property
    def position_lengthscales(self) -> np.ndarray:
        """Length scales listed in elimination order (non-decreasing)."""
        return self.lengthscales[self.perm]


def _from_selection(selection, ell, n_pred=0, fallbacks=0) -> Ordering:
    # points are selected last-to-first
    return Ordering(np.asarray(selection[::-1], dtype=np.intp), ell, n_pred, fallbacks)


def reverse_maximin_bruteforce(points: PointSet) -> Ordering:
    """O(N^2) greedy reference: each step takes the unselected point farthest
    from the selected set and the boundary, lowest index on ties."""
    n = len(points)
    if n == 0:
        raise OrderingError("empty point set")
    X = points.coords
    key = points.boundary_distances().copy()
    ell = np.empty(n)
    avail = np.ones(n, dtype=bool)
    selection = []
    masked = np.empty(n)
    for _ in range(n):
        masked[:] = -np.inf
        masked[avail] = key[avail]
        i = int(np.argmax(masked))
        ell[i] = key[i]
        avail[i] = False
        selection.append(i)
        np.minimum(key, distances_to(X[i], X), out=key)
    return _from_selection(selection, ell)


def reverse_maximin(points: PointSet, rho: float = 2.0, return_children: bool = False):
    """Reverse-maximin ordering via a lazy max-heap and children lists.

    Each selected point ``i`` keeps the list of all points within
    ``rho * l_i`` of it, sorted by distance.  When a new point is selected
    its candidates for distance updates are read off the children list of
    the closest earlier point whose ball is guaranteed to cover them, so no
    global distance scans are needed.  ``rho`` is clamped to at least 2
    (required for a covering parent to exist).

    Ties in the argmax go to the lowest original index, which makes the
    output identical to :func:`reverse_maximin_bruteforce`.

    With ``return_children=True`` the per-point children lists
    ``(indices, distances)`` are returned as well; ``children[i]`` covers
    every point within ``rho * l_i`` of point ``i``.
    """
    n = len(points)
    if n == 0:
        raise OrderingError("empty point set")
    rho_alg = max(float(rho), 2.0) * (1.0 + 1e-12)
    X = points.coords
    key = points.boundary_distances().copy()
    ell = np.full(n, np.nan)
    selected = np.zeros(n, dtype=bool)
    radius = np.zeros(n)
    children: list = [None] * n
    parents: list = [[] for _ in range(n)]

    heap = [(-key[j], j) for j in range(n)]
    heapq.heapify(heap)

    def pop():
        while True:
            negk, j = heapq.heappop(heap)
            if not selected[j] and -negk == key[j]:
                return j

    def update(i, cand, dc):
        # decrease keys of unselected candidates and record parent links
        live = ~selected[cand]
        cl = cand[live]
        dl = dc[live]
        dec = dl < key[cl]
        for j, d in zip(cl[dec].tolist(), dl[dec].tolist()):
            key[j] = d
            heapq.heappush(heap, (-d, j))
        for j in cl.tolist():
            parents[j].append(i)

    # root: every point is its child
    root = pop()
    ell[root] = key[root]
    selected[root] = True
    radius[root] = np.inf
    d_all = distances_to(X[root], X)
    srt = np.argsort(d_all, kind="stable")
    children[root] = (srt, d_all[srt])
    update(root, srt, d_all[srt])
    selection = [root]
    fallbacks = 0

    for _ in range(n - 1):
        i = pop()
        li = key[i]
        ell[i] = li
        selected[i] = True
        selection.append(i)
        reach = rho_alg * li
        ks = np.asarray(parents[i], dtype=np.intp)
        dk = distances_to(X[i], X[ks])
        ok = dk + reach <= radius[ks]
        if ok.any():
            cand_k = np.flatnonzero(ok)
            pick = cand_k[np.argmin(dk[cand_k])]
            k, dik = int(ks[pick]), dk[pick]
        else:
            k, dik = root, float(distances_to(X[i], X[root : root + 1])[0])
            fallbacks += 1
        kidx, kdist = children[k]
        stop = np.searchsorted(kdist, dik + reach, side="right")
        cand = kidx[:stop]
        dc = distances_to(X[i], X[cand])
        inside = dc <= reach
        cand = cand[inside]
        dc = dc[inside]
        srt = np.argsort(dc, kind="stable")
        cand = cand[srt]
        dc = dc[srt]
        children[i] = (cand, dc)
        radius[i] = reach
        update(i, cand, dc)
        parents[i] = None

    order = _from_selection(selection, ell, fallbacks=fallbacks)
    if return_children:
        return order, children, rho_alg
    return order


def nearest_distances(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Distance from each query point to its nearest reference point.

    The nearest neighbor is located with a k-d tree; the distance itself is
    recomputed with :func:`distances_to` so it matches the brute-force path.
    """
    if len(ref) == 0:
        return np.full(len(query), np.inf)
    _, idx = cKDTree(ref).query(query, k=1)
    idx = np.atleast_1d(idx)
    out = np.empty(len(query))
    for a, j in enumerate(idx):
        out[a] = distances_to(query[a], ref[j : j + 1])[0]
    return out


def augmented_prediction_points(train: PointSet, pred: PointSet) -> PointSet:
    """Prediction points whose boundary also includes the training points."""
    base = train.boundary_distance
    tr = train.coords

    def dist(Q):
        d = nearest_distances(np.atleast_2d(Q), tr)
        if base is not None:
            d = np.minimum(d, base(Q))
        return d

    return PointSet(pred.coords, dist)


def joint_ordering_prediction_first(train: PointSet, pred: PointSet, bruteforce: bool = False):
    """Ordering of training and prediction points, prediction points first.

    The joint point set is ``[train; pred]`` (prediction points get original
    indices ``N_train .. N_train + N_pred - 1``).  Training points are ordered
    on their own domain; prediction points are ordered with the training
    points treated as additional boundary.  Returns ``(ordering, joint_points)``.
    """
    if len(train) == 0:
        raise OrderingError("empty training set")
    order_fn = reverse_maximin_bruteforce if bruteforce else reverse_maximin
    otr = order_fn(train)
    ntr = len(train)
    joint = PointSet(np.vstack([train.coords, pred.coords]) if len(pred) else train.coords,
                     train.boundary_distance)
    if len(pred) == 0:
        return otr, joint
    opr = order_fn(augmented_prediction_points(train, pred))
    perm = np.concatenate([opr.perm + ntr, otr.perm])
    ell = np.concatenate([otr.lengthscales, opr.lengthscales])
    return Ordering(perm, ell, n_pred=len(pred)), joint
