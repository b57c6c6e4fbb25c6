"""Sequential CSR matrices, Matrix Market I/O, permutations and RCM ordering."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

__all__ = [
    "CsrMatrix",
    "Permutation",
    "MatrixMarketError",
    "MatrixMarketFieldError",
    "load_matrix_market",
    "write_matrix_market",
    "bandwidth",
    "rcm_order",
    "permute",
]

PathLike = Union[str, os.PathLike]


class MatrixMarketError(ValueError):
    """Malformed or out-of-bounds Matrix Market content."""


class MatrixMarketFieldError(MatrixMarketError):
    """The file is well formed but uses an unsupported field (complex, pattern)."""


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix with 64-bit float values.

    Column indices are sorted and unique within each row. Instances are
    treated as immutable; the arrays are flagged read-only on construction.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (row_ptr, col_idx, values):
            arr.flags.writeable = False
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self.check()

    def check(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative dimension")
        if self.row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows + 1")
        if self.row_ptr[0] != 0:
            raise ValueError("row_ptr[0] must be 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        nnz = int(self.row_ptr[-1])
        if self.col_idx.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_idx and values must have length row_ptr[-1]")
        if nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing inside a row: every step that is not a row start must increase
            steps = np.diff(self.col_idx)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[self.row_ptr[1:-1][self.row_ptr[1:-1] < nnz]] = True
            if np.any(steps[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "CsrMatrix":
        """Build from triplets. Duplicates are summed; explicit zeros are kept."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            # sums duplicates in file order, which lexsort (stable) preserved
            vals = np.add.reduceat(vals, starts) if starts.size < vals.size else vals
            rows, cols = rows[starts], cols[starts]
        counts = np.bincount(rows, minlength=n_rows)
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, cols, vals)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_idx] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_coo(self.n_cols, self.n_rows, self.col_idx, self.row_indices(), self.values)

    def equals(self, other: "CsrMatrix") -> bool:
        """Structural and bitwise value equality."""
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values.view(np.int64), other.values.view(np.int64))
        )

    def __repr__(self):
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


# --- Matrix Market ---------------------------------------------------------


def load_matrix_market(path: PathLike, symmetry_expand: bool = True) -> CsrMatrix:
    """Read a real coordinate Matrix Market file into CSR form.

    Parameters
    ----------
    path : path-like
        File to read.
    symmetry_expand : bool
        For ``symmetric`` files, mirror every off-diagonal entry so the
        result holds the full matrix. When False the stored triangle is
        returned as-is.

    Raises
    ------
    MatrixMarketFieldError
        For ``complex`` or ``pattern`` fields.
    MatrixMarketError
        For any other malformed header, size line or entry, and for
        indices outside the declared dimensions.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(f"{path}: empty file")

    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise MatrixMarketError(f"{path}: bad header line {lines[0]!r}")
    obj, fmt, field, symmetry = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"{path}: unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported, got {fmt!r}")
    if field in ("complex", "pattern"):
        raise MatrixMarketFieldError(f"{path}: {field} matrices are not supported")
    if field not in ("real", "double", "integer"):
        raise MatrixMarketError(f"{path}: unknown field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")

    body = [(no, ln) for no, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError(f"{path}: missing size line")
    size_no, size_line = body[0]
    try:
        n_rows, n_cols, nnz = (int(t) for t in size_line.split())
    except ValueError:
        raise MatrixMarketError(f"{path}:{size_no}: bad size line {size_line!r}") from None
    entries = body[1:]
    if len(entries) != nnz:
        raise MatrixMarketError(f"{path}: declared {nnz} entries, found {len(entries)}")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    for k, (no, ln) in enumerate(entries):
        parts = ln.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"{path}:{no}: expected 'row col value', got {ln!r}")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"{path}:{no}: cannot parse entry {ln!r}") from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f"{path}:{no}: index ({i}, {j}) outside {n_rows}x{n_cols}")
        if symmetry == "symmetric" and j > i:
            raise MatrixMarketError(f"{path}:{no}: symmetric file has upper-triangle entry ({i}, {j})")
        rows[k], cols[k], vals[k] = i - 1, j - 1, v

    if symmetry == "symmetric" and symmetry_expand:
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return CsrMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def write_matrix_market(m: CsrMatrix, path: PathLike, comment: str | None = None) -> None:
    """Write ``m`` as a general real coordinate file; values round-trip exactly."""
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{m.n_rows} {m.n_cols} {m.nnz}\n")
        for i, j, v in zip(m.row_indices() + 1, m.col_idx + 1, m.values):
            fh.write(f"{i} {j} {float(v)!r}\n")


# --- bandwidth, permutations, RCM -----------------------------------------


def _require_square(m: CsrMatrix):
    if m.n_rows != m.n_cols:
        raise ValueError(f"square matrix required, got {m.n_rows}x{m.n_cols}")


def bandwidth(m: CsrMatrix) -> int:
    """Maximum ``|i - j|`` over stored entries; 0 for empty or diagonal matrices."""
    _require_square(m)
    if m.nnz == 0:
        return 0
    return int(np.abs(m.row_indices() - m.col_idx).max())


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``[0, n)`` stored as ``new_of_old``."""

    new_of_old: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.new_of_old, dtype=np.int64)
        if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(p.size)):
            raise ValueError("not a permutation of 0..n-1")
        p.flags.writeable = False
        object.__setattr__(self, "new_of_old", p)

    def __len__(self):
        return self.new_of_old.size

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.new_of_old, other.new_of_old)

    @property
    def old_of_new(self) -> np.ndarray:
        inv = np.empty_like(self.new_of_old)
        inv[self.new_of_old] = np.arange(self.new_of_old.size)
        return inv

    def inverse(self) -> "Permutation":
        return Permutation(self.old_of_new)

    def apply(self, v) -> np.ndarray:
        """Reorder a vector consistently with :func:`permute`: ``out[p[i]] = v[i]``."""
        v = np.asarray(v)
        out = np.empty_like(v)
        out[self.new_of_old] = v
        return out

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))


def permute(m: CsrMatrix, p: Union[Permutation, Iterable[int]]) -> CsrMatrix:
    """Symmetric permutation: entry ``(i, j, v)`` moves to ``(p[i], p[j], v)``."""
    _require_square(m)
    if not isinstance(p, Permutation):
        p = Permutation(np.asarray(list(p) if not isinstance(p, np.ndarray) else p))
    if len(p) != m.n_rows:
        raise ValueError(f"permutation length {len(p)} does not match matrix order {m.n_rows}")
    q = p.new_of_old
    return CsrMatrix.from_coo(m.n_rows, m.n_cols, q[m.row_indices()], q[m.col_idx], m.values)


def _adjacency(m: CsrMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized, diagonal-free adjacency in CSR form (sorted neighbour lists)."""
    rows = m.row_indices()
    cols = m.col_idx
    off = rows != cols
    r = np.concatenate([rows[off], cols[off]])
    c = np.concatenate([cols[off], rows[off]])
    g = CsrMatrix.from_coo(m.n_rows, m.n_cols, r, c, np.ones(r.size))
    return g.row_ptr, g.col_idx


def _levels(start, ptr, adj, degree, allowed=None):
    """BFS level structure from ``start``; neighbours visited by (degree, index)."""
    seen = {start}
    levels = [[start]]
    while True:
        nxt = []
        for u in levels[-1]:
            nbrs = [v for v in adj[ptr[u]:ptr[u + 1]] if v not in seen]
            for v in sorted(nbrs, key=lambda v: (degree[v], v)):
                seen.add(v)
                nxt.append(v)
        if not nxt:
            return levels
        levels.append(nxt)


def _pseudo_peripheral(component, ptr, adj, degree):
    start = min(component, key=lambda v: (degree[v], v))
    levels = _levels(start, ptr, adj, degree)
    while True:
        cand = min(levels[-1], key=lambda v: (degree[v], v))
        cand_levels = _levels(cand, ptr, adj, degree)
        if len(cand_levels) <= len(levels):
            return start
        start, levels = cand, cand_levels


def rcm_order(m: CsrMatrix) -> Permutation:
    """Reverse Cuthill-McKee ordering of the symmetrized pattern of ``m``.

    Components are laid out in order of their lowest original index; each
    component is ordered from a pseudo-peripheral start node with
    neighbours enqueued by ascending degree (ties by index), then
    reversed in place.
    """
    _require_square(m)
    n = m.n_rows
    ptr, adj = _adjacency(m)
    ptr = ptr.tolist()
    adj = adj.tolist()
    degree = np.diff(np.asarray(ptr)).tolist() if n else []

    visited = [False] * n
    order: list[int] = []
    for seed in range(n):
        if visited[seed]:
            continue
        # component discovery
        comp = [seed]
        visited[seed] = True
        queue = deque([seed])
        while queue:
            u = queue.popleft()
            for v in adj[ptr[u]:ptr[u + 1]]:
                if not visited[v]:
                    visited[v] = True
                    comp.append(v)
                    queue.append(v)
        start = _pseudo_peripheral(comp, ptr, adj, degree)
        cm = [v for level in _levels(start, ptr, adj, degree) for v in level]
        order.extend(reversed(cm))

    new_of_old = np.empty(n, dtype=np.int64)
    new_of_old[np.asarray(order, dtype=np.int64)] = np.arange(n)
    return Permutation(new_of_old)
