"""Distance-based sparsity patterns and supernodal aggregation.

All indices here are positions in the elimination order (0-based).  Each
column list starts with its diagonal, followed by the remaining rows in
ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._parallel import chunks, pmap
from .kernels import distances_to
from .ordering import Ordering, PointSet


class PatternError(ValueError):
    pass


@dataclass
class SparsityPattern:
    """Column-compressed lower-triangular pattern."""

    offsets: np.ndarray
    indices: np.ndarray
    rho: float = np.inf

    @property
    def n(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def nnz(self) -> int:
        return int(self.offsets[-1])

    def column(self, j: int) -> np.ndarray:
        return self.indices[self.offsets[j] : self.offsets[j + 1]]

    def column_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def columns(self):
        return [self.column(j) for j in range(self.n)]

    def entries(self):
        """``(rows, cols)`` arrays of every stored position."""
        cols = np.repeat(np.arange(self.n), self.column_sizes())
        return self.indices.copy(), cols

    def contains(self, other: "SparsityPattern") -> bool:
        return all(np.isin(other.column(j), self.column(j)).all() for j in range(self.n))

    @classmethod
    def from_columns(cls, cols, rho=np.inf) -> "SparsityPattern":
        sizes = np.array([len(c) for c in cols], dtype=np.intp)
        offsets = np.zeros(len(cols) + 1, dtype=np.intp)
        np.cumsum(sizes, out=offsets[1:])
        indices = np.concatenate(cols).astype(np.intp) if cols else np.zeros(0, np.intp)
        return cls(offsets, indices, rho)

    @classmethod
    def full(cls, n: int) -> "SparsityPattern":
        return cls.from_columns([np.arange(j, n) for j in range(n)])

    @classmethod
    def diagonal(cls, n: int) -> "SparsityPattern":
        return cls.from_columns([np.array([j]) for j in range(n)], rho=0.0)

    def check(self):
        for j in range(self.n):
            c = self.column(j)
            if len(c) == 0 or c[0] != j:
                raise PatternError(f"column {j} does not start with its diagonal")
            if np.any(np.diff(c[1:]) <= 0) or (len(c) > 1 and c[1] <= j):
                raise PatternError(f"column {j} is not strictly ascending below the diagonal")


def build_pattern(ordering: Ordering, points: PointSet, rho: float, threads: int = 1) -> SparsityPattern:
    """Pattern ``{(i, j): i >= j, dist(x_i, x_j) <= rho * l_j}`` in positions.

    Candidates come from k-d tree ball queries; the distance test itself uses
    the same distance routine as the ordering.
    """
    if not rho >= 1:
        raise PatternError("rho must be >= 1")
    X = points.coords[ordering.perm]
    ell = ordering.position_lengthscales
    n = X.shape[0]
    tree = cKDTree(X)

    def work(span):
        a, b = span
        out = []
        r = rho * ell[a:b]
        finite = np.isfinite(r)
        q = np.where(finite, r * (1 + 1e-9) + 1e-300, 0.0)
        cands = tree.query_ball_point(X[a:b], q, return_sorted=False)
        for off, j in enumerate(range(a, b)):
            if not finite[off]:
                below = np.arange(j + 1, n)
            else:
                c = np.asarray(cands[off], dtype=np.intp)
                c = c[c > j]
                below = np.sort(c[distances_to(X[j], X[c]) <= r[off]])
            out.append(np.concatenate([[j], below]).astype(np.intp))
        return out

    cols = [c for part in pmap(work, chunks(n), threads) for c in part]
    return SparsityPattern.from_columns(cols, rho)


def pattern_from_children(ordering: Ordering, children, rho: float) -> SparsityPattern:
    """Read the pattern off the children lists produced by ``reverse_maximin``."""
    inv = ordering.inv_perm
    ell = ordering.lengthscales
    cols = []
    for j, i in enumerate(ordering.perm):
        idx, dist = children[i]
        pos = inv[idx]
        keep = (pos > j) & (dist <= rho * ell[i])
        cols.append(np.concatenate([[j], np.sort(pos[keep])]).astype(np.intp))
    return SparsityPattern.from_columns(cols, rho)


@dataclass
class SupernodePartition:
    """Grouping of columns into supernodes.

    ``parents`` of supernode ``t`` are the columns computed from it; its
    ``children`` are the union of the parents' column patterns, ascending.
    """

    parent_offsets: np.ndarray
    parent_indices: np.ndarray
    child_offsets: np.ndarray
    child_indices: np.ndarray
    assignment: np.ndarray
    lam: float

    @property
    def n_supernodes(self) -> int:
        return self.parent_offsets.shape[0] - 1

    def parents(self, t: int) -> np.ndarray:
        return self.parent_indices[self.parent_offsets[t] : self.parent_offsets[t + 1]]

    def children(self, t: int) -> np.ndarray:
        return self.child_indices[self.child_offsets[t] : self.child_offsets[t + 1]]

    def max_block(self) -> int:
        return int(np.diff(self.child_offsets).max())

    def block_cost(self) -> int:
        """Sum of squared supernode sizes."""
        return int((np.diff(self.child_offsets).astype(np.int64) ** 2).sum())


def aggregate_supernodes(pattern: SparsityPattern, ordering: Ordering, lam: float = 1.5) -> SupernodePartition:
    """Greedy sweep in elimination order.

    The first unassigned column ``i`` seeds a supernode that takes every
    unassigned ``j`` in the column pattern of ``i`` with ``l_j <= lam * l_i``.
    ``lam <= 1`` disables aggregation.
    """
    if lam < 1:
        raise PatternError("lambda must be >= 1")
    n = pattern.n
    ell = ordering.position_lengthscales
    assignment = np.full(n, -1, dtype=np.intp)
    parents = []
    for i in range(n):
        if assignment[i] >= 0:
            continue
        if lam > 1:
            s = pattern.column(i)
            grp = s[(assignment[s] < 0) & (ell[s] <= lam * ell[i])]
            grp = np.sort(grp)
        else:
            grp = np.array([i], dtype=np.intp)
        assignment[grp] = len(parents)
        parents.append(grp)
    kids = [np.unique(np.concatenate([pattern.column(k) for k in grp])) for grp in parents]
    po = np.zeros(len(parents) + 1, dtype=np.intp)
    np.cumsum([len(g) for g in parents], out=po[1:])
    co = np.zeros(len(kids) + 1, dtype=np.intp)
    np.cumsum([len(c) for c in kids], out=co[1:])
    return SupernodePartition(po, np.concatenate(parents), co, np.concatenate(kids), assignment, lam)


def implied_column_pattern(partition: SupernodePartition, k: int) -> np.ndarray:
    """Aggregated column pattern of ``k``: the supernode's children from ``k`` on."""
    t = partition.assignment[k]
    if t < 0:
        raise PatternError(f"column {k} is not assigned to a supernode")
    c = partition.children(t)
    p = int(np.searchsorted(c, k))
    return c[p:]


def aggregated_pattern(partition: SupernodePartition) -> SparsityPattern:
    """The aggregated pattern as an explicit column pattern."""
    n = partition.assignment.shape[0]
    return SparsityPattern.from_columns([implied_column_pattern(partition, k) for k in range(n)])


def check_partition(pattern: SparsityPattern, ordering: Ordering, partition: SupernodePartition) -> None:
    """Raise ``PatternError`` if any supernode invariant fails."""
    n = pattern.n
    ell = ordering.position_lengthscales
    seen = np.zeros(n, dtype=int)
    for t in range(partition.n_supernodes):
        par = partition.parents(t)
        kids = partition.children(t)
        seen[par] += 1
        seed = par[0]
        if not np.isin(par, pattern.column(seed)).all():
            raise PatternError(f"supernode {t}: parent outside the seed's column")
        if partition.lam > 1 and np.any(ell[par] > partition.lam * ell[seed]):
            raise PatternError(f"supernode {t}: length-scale ratio exceeds lambda")
        for k in par:
            if not np.isin(pattern.column(k), kids).all():
                raise PatternError(f"supernode {t}: column {k} not covered by children")
        if np.any(np.diff(kids) <= 0):
            raise PatternError(f"supernode {t}: children not ascending")
    if not np.all(seen == 1):
        raise PatternError("parents do not partition the columns")
