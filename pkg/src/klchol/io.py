"""CSV/text ingestion and export.

Every exported index column is 1-based.  Each writer has a matching reader
so outputs can be loaded back.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .factor import SparseFactor
from .ordering import Ordering
from .sparsity import SparsityPattern, SupernodePartition


class ParseError(ValueError):
    def __init__(self, msg, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.path = path
        self.line = line


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _rows(path):
    """Non-blank CSV rows as ``(line_number, fields)``.  A first row with a
    non-numeric field is a header and is skipped."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ParseError(str(e), path) from None
    out = []
    first = True
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in row]
            if not any(fields):
                continue
            if first and not all(_is_number(f) for f in fields):
                first = False
                continue
            first = False
            out.append((lineno, fields))
    return out


def read_points(path) -> np.ndarray:
    """``N x d`` array from a CSV file, one point per row."""
    rows = _rows(path)
    if not rows:
        raise ParseError("no points", path)
    d = len(rows[0][1])
    X = np.empty((len(rows), d))
    for a, (lineno, fields) in enumerate(rows):
        if len(fields) != d:
            raise ParseError(f"expected {d} columns, found {len(fields)}", path, lineno)
        try:
            X[a] = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric value in {fields!r}", path, lineno) from None
        if not np.all(np.isfinite(X[a])):
            raise ParseError("non-finite coordinate", path, lineno)
    return X


def read_values(path, n: int) -> np.ndarray:
    """Length-``n`` vector from ``index,value`` rows (1-based, each index once)
    or from one value per row in order."""
    rows = _rows(path)
    out = np.full(n, np.nan)
    seen = np.zeros(n, dtype=bool)
    single = rows and len(rows[0][1]) == 1
    if single and len(rows) != n:
        raise ParseError(f"expected {n} values, found {len(rows)}", path)
    for a, (lineno, fields) in enumerate(rows):
        if not single and len(fields) != 2:
            raise ParseError(f"expected 'index,value', found {len(fields)} columns", path, lineno)
        try:
            i, v = (a, float(fields[0])) if single else (int(fields[0]) - 1, float(fields[1]))
        except ValueError:
            raise ParseError(f"cannot parse {fields!r}", path, lineno) from None
        if not 0 <= i < n:
            raise ParseError(f"index {i + 1} out of range 1..{n}", path, lineno)
        if seen[i]:
            raise ParseError(f"duplicate index {i + 1}", path, lineno)
        seen[i] = True
        out[i] = v
    if not seen.all():
        raise ParseError(f"missing value for index {int(np.flatnonzero(~seen)[0]) + 1}", path)
    return out


def write_values(path, values, name="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", name])
        for i, v in enumerate(values, start=1):
            w.writerow([i, repr(float(v))])


def write_points(path, X):
    X = np.atleast_2d(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{a + 1}" for a in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def write_ordering(path, ordering: Ordering):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "original_index", "lengthscale"])
        for pos, i in enumerate(ordering.perm):
            w.writerow([pos + 1, int(i) + 1, repr(float(ordering.lengthscales[i]))])


def read_ordering(path) -> Ordering:
    rows = _rows(path)
    n = len(rows)
    perm = np.empty(n, dtype=np.intp)
    ell = np.empty(n)
    for lineno, f in rows:
        try:
            pos, i, l = int(f[0]) - 1, int(f[1]) - 1, float(f[2])
        except (ValueError, IndexError):
            raise ParseError(f"cannot parse {f!r}", path, lineno) from None
        perm[pos] = i
        ell[i] = l
    return Ordering(perm, ell)


def write_pattern(path, pattern: SparsityPattern):
    rows, cols = pattern.entries()
    np.savetxt(path, np.column_stack([rows + 1, cols + 1]), fmt="%d")


def read_pattern(path, n: int) -> SparsityPattern:
    a = np.loadtxt(path, dtype=np.intp, ndmin=2) - 1
    cols = [[] for _ in range(n)]
    for i, j in a:
        cols[j].append(i)
    return SparsityPattern.from_columns([np.array([j] + sorted(set(c) - {j}), dtype=np.intp) for j, c in enumerate(cols)])


def write_supernodes(path, partition: SupernodePartition):
    with open(path, "w") as fh:
        for t in range(partition.n_supernodes):
            par = ",".join(str(int(k) + 1) for k in partition.parents(t))
            kids = ",".join(str(int(k) + 1) for k in partition.children(t))
            fh.write(f"{t + 1}: parents=[{par}] children=[{kids}]\n")


def read_supernodes(path):
    """List of ``(parents, children)`` arrays, 0-based."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                _, rest = line.split(":", 1)
                p = rest.split("parents=[")[1].split("]")[0]
                c = rest.split("children=[")[1].split("]")[0]
            except IndexError:
                raise ParseError("malformed supernode line", path, lineno) from None
            out.append((np.array([int(v) - 1 for v in p.split(",") if v], dtype=np.intp),
                        np.array([int(v) - 1 for v in c.split(",") if v], dtype=np.intp)))
    return out


def write_factor(path, factor: SparseFactor):
    r, c, v = factor.triplets()
    with open(path, "w") as fh:
        for i, k, x in zip(r.tolist(), c.tolist(), v.tolist()):
            fh.write(f"{i} {k} {x!r}\n")


def read_factor(path, n: int) -> SparseFactor:
    a = np.loadtxt(path, ndmin=2)
    rows = a[:, 0].astype(np.intp) - 1
    cols = a[:, 1].astype(np.intp) - 1
    order = np.lexsort((rows, cols))  # rows >= col, so the diagonal leads each column
    rows, cols, vals = rows[order], cols[order], a[order, 2]
    offsets = np.zeros(n + 1, dtype=np.intp)
    np.add.at(offsets, cols + 1, 1)
    return SparseFactor(SparsityPattern(np.cumsum(offsets), rows), vals)


def write_matrix(path, M):
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def append_json(path, obj: dict):
    with open(path, "a") as fh:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_json_lines(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
