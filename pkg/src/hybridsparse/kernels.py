"""Chunk-owned vector and sequential matrix kernels.

Each operation forks one task per chunk of the destination's
:class:`~hybridsparse.layout.ChunkMap`, and joins before returning. Worker
``c`` writes only ``[lo_c, hi_c)`` of the destination and may read inputs
anywhere. Reductions combine per-chunk partials in ascending chunk order,
so results depend only on the data and the chunk count, never on thread
timing.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .layout import ChunkMap, chunk_ranges
from .perflog import current_recorder, record_op
from .sparse import CsrMatrix

__all__ = [
    "ThreadingPolicy",
    "ChunkedVector",
    "WorkerPool",
    "ZeroDivisorError",
    "parallel_for",
    "alloc_zeroed",
    "vec_set",
    "vec_copy",
    "vec_scale",
    "vec_conjugate",
    "vec_axpy",
    "vec_aypx",
    "vec_waxpy",
    "vec_dot",
    "vec_norm2",
    "vec_pointwise_mult",
    "vec_pointwise_divide",
    "seq_spmv",
    "mat_get_diagonal",
]


class ZeroDivisorError(ZeroDivisionError):
    def __init__(self, index: int, msg: str | None = None):
        self.index = index
        super().__init__(msg or f"zero divisor at index {index}")


@dataclass(frozen=True)
class ThreadingPolicy:
    """How many workers an object is split over.

    Objects shorter than ``size_threshold`` run as a single chunk. With
    ``parallel=False`` chunks are still formed but executed one after
    another on the calling thread.
    """

    n_threads: int = 1
    size_threshold: int = 0
    parallel: bool = True

    def __post_init__(self):
        if self.n_threads < 1:
            raise ValueError("n_threads must be >= 1")
        if self.size_threshold < 0:
            raise ValueError("size_threshold must be >= 0")

    def effective_chunks(self, n: int) -> int:
        return 1 if n < self.size_threshold else self.n_threads


class WorkerPool:
    """Fork/join helper: the caller runs chunk 0, ``n - 1`` helper threads run the rest."""

    def __init__(self, n_workers: int):
        self.n_workers = n_workers
        self._executor = ThreadPoolExecutor(max(n_workers - 1, 1), thread_name_prefix="chunk")

    def run(self, tasks):
        """Run zero-argument callables; return their results in task order."""
        if len(tasks) <= 1:
            return [t() for t in tasks]
        futures = [self._executor.submit(t) for t in tasks[1:]]
        first = tasks[0]()
        return [first] + [f.result() for f in futures]

    def shutdown(self):
        self._executor.shutdown(wait=True)


_pools = threading.local()


def _pool_for(n: int) -> WorkerPool:
    """Worker pool of size ``n`` owned by the calling thread (one per rank)."""
    cache = getattr(_pools, "cache", None)
    if cache is None:
        cache = _pools.cache = {}
    pool = cache.get(n)
    if pool is None:
        pool = cache[n] = WorkerPool(n)
    return pool


def install_pools(cache: dict):
    """Use ``cache`` (size -> WorkerPool) as the calling thread's pool set."""
    _pools.cache = cache


def parallel_for(chunks: ChunkMap, body, out: np.ndarray | None = None, *, policy: ThreadingPolicy | None = None,
                 op: str = "parallel_for"):
    """Run ``body(c, lo, hi, dst)`` for every chunk and return the per-chunk results.

    ``dst`` is ``out``, except in instrumented mode where each worker gets a
    private copy whose foreign-chunk changes are reported as violations
    and whose own chunk is then merged back.
    """
    rec = current_recorder()
    isolate = out is not None and rec is not None and rec.check_isolation
    ranges = chunks.thread_ranges
    if isolate:
        before = out.copy()
        scratch = [out.copy() for _ in ranges]
        tasks = [lambda c=c, lo=lo, hi=hi: body(c, lo, hi, scratch[c]) for c, (lo, hi) in enumerate(ranges)]
    else:
        tasks = [lambda c=c, lo=lo, hi=hi: body(c, lo, hi, out) for c, (lo, hi) in enumerate(ranges)]

    threaded = (policy is None or policy.parallel) and len(tasks) > 1
    results = _pool_for(len(tasks)).run(tasks) if threaded else [t() for t in tasks]

    if isolate:
        ref = before.view(np.uint8).reshape(before.size, -1) if before.size else before
        for c, (lo, hi) in enumerate(ranges):
            got = scratch[c].view(np.uint8).reshape(before.size, -1) if before.size else scratch[c]
            changed = np.flatnonzero(np.any(got != ref, axis=-1)) if before.size else np.empty(0, int)
            for i in changed[(changed < lo) | (changed >= hi)]:
                rec.violations.append((op, c, int(i)))
            out[lo:hi] = scratch[c][lo:hi]
        rec.isolation_checks += 1
    return results


class ChunkedVector:
    """Contiguous float64 vector divided into worker-owned chunks."""

    __slots__ = ("values", "chunks", "policy", "owner_tag")

    def __init__(self, values: np.ndarray, chunks: ChunkMap, policy: ThreadingPolicy, owner_tag=None):
        if chunks.n_local != values.size:
            raise ValueError(f"chunk map covers {chunks.n_local} entries, vector has {values.size}")
        self.values = values
        self.chunks = chunks
        self.policy = policy
        self.owner_tag = owner_tag

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"ChunkedVector(n={self.values.size}, chunks={self.chunks.n_chunks})"

    @classmethod
    def from_array(cls, arr, policy: ThreadingPolicy | None = None) -> "ChunkedVector":
        """Owner-initialized copy of ``arr``."""
        arr = np.asarray(arr, dtype=np.float64).ravel()
        v = alloc_zeroed(arr.size, policy or ThreadingPolicy())
        src = arr

        def body(c, lo, hi, dst):
            dst[lo:hi] = src[lo:hi]

        parallel_for(v.chunks, body, v.values, policy=v.policy, op="VecSetValues")
        return v

    def duplicate(self) -> "ChunkedVector":
        """Zeroed vector with the same length and schedule."""
        return alloc_zeroed(self.values.size, self.policy)

    def to_array(self) -> np.ndarray:
        return self.values.copy()


def alloc_zeroed(n: int, policy: ThreadingPolicy | None = None) -> ChunkedVector:
    """Allocate ``n`` zeros, each chunk written first by its owning worker."""
    policy = policy or ThreadingPolicy()
    chunks = chunk_ranges(n, policy.effective_chunks(n))
    values = np.empty(n, dtype=np.float64)
    owner_tag = np.full(chunks.n_chunks, -1, dtype=np.int64)

    def body(c, lo, hi, dst):
        dst[lo:hi] = 0.0
        owner_tag[c] = c

    parallel_for(chunks, body, values, policy=policy, op="VecCreate")
    return ChunkedVector(values, chunks, policy, owner_tag)


def _check_same(*vecs: ChunkedVector):
    first = vecs[0]
    for v in vecs[1:]:
        if v.values.size != first.values.size:
            raise ValueError(f"length mismatch: {first.values.size} vs {v.values.size}")
        if v.chunks != first.chunks:
            raise ValueError("chunk map mismatch")


def _elementwise(name, flops, dst: ChunkedVector, fn, *inputs: ChunkedVector):
    _check_same(dst, *inputs)
    with record_op(name, flops):
        parallel_for(dst.chunks, fn, dst.values, policy=dst.policy, op=name)


def vec_set(v: ChunkedVector, alpha: float):
    a = float(alpha)

    def body(c, lo, hi, dst):
        dst[lo:hi] = a

    _elementwise("VecSet", 0, v, body)


def vec_copy(src: ChunkedVector, dst: ChunkedVector):
    x = src.values

    def body(c, lo, hi, d):
        d[lo:hi] = x[lo:hi]

    _elementwise("VecCopy", 0, dst, body, src)


def vec_scale(v: ChunkedVector, alpha: float):
    a = float(alpha)

    def body(c, lo, hi, dst):
        dst[lo:hi] *= a

    _elementwise("VecScale", len(v), v, body)


def vec_conjugate(v: ChunkedVector):
    """Complex conjugate in place; the identity for real scalars."""

    def body(c, lo, hi, dst):
        dst[lo:hi] = np.conj(dst[lo:hi])

    _elementwise("VecConjugate", 0, v, body)


def vec_axpy(y: ChunkedVector, alpha: float, x: ChunkedVector):
    """``y <- alpha * x + y``"""
    a, xv = float(alpha), x.values
    if a == 0.0:
        _check_same(y, x)
        with record_op("VecAXPY", 2 * len(y)):
            return

    def body(c, lo, hi, dst):
        dst[lo:hi] += a * xv[lo:hi]

    _elementwise("VecAXPY", 2 * len(y), y, body, x)


def vec_aypx(y: ChunkedVector, alpha: float, x: ChunkedVector):
    """``y <- x + alpha * y``"""
    a, xv = float(alpha), x.values

    def body(c, lo, hi, dst):
        dst[lo:hi] = xv[lo:hi] + a * dst[lo:hi]

    _elementwise("VecAYPX", 2 * len(y), y, body, x)


def vec_waxpy(w: ChunkedVector, alpha: float, x: ChunkedVector, y: ChunkedVector):
    """``w <- alpha * x + y``"""
    a, xv, yv = float(alpha), x.values, y.values

    def body(c, lo, hi, dst):
        dst[lo:hi] = a * xv[lo:hi] + yv[lo:hi]

    _elementwise("VecWAXPY", 2 * len(w), w, body, x, y)


def vec_pointwise_mult(w: ChunkedVector, x: ChunkedVector, y: ChunkedVector):
    """``w <- x * y`` elementwise."""
    xv, yv = x.values, y.values

    def body(c, lo, hi, dst):
        dst[lo:hi] = xv[lo:hi] * yv[lo:hi]

    _elementwise("VecPointwiseMult", len(w), w, body, x, y)


def vec_pointwise_divide(w: ChunkedVector, x: ChunkedVector, y: ChunkedVector):
    """``w <- x / y`` elementwise; raises :class:`ZeroDivisorError` naming the first zero in ``y``."""
    _check_same(w, x, y)
    zeros = np.flatnonzero(y.values == 0.0)
    if zeros.size:
        raise ZeroDivisorError(int(zeros[0]))
    xv, yv = x.values, y.values

    def body(c, lo, hi, dst):
        dst[lo:hi] = xv[lo:hi] / yv[lo:hi]

    _elementwise("VecPointwiseDivide", len(w), w, body, x, y)


def vec_dot(x: ChunkedVector, y: ChunkedVector) -> float:
    """Chunk partials combined in ascending chunk order."""
    _check_same(x, y)
    xv, yv = x.values, y.values
    with record_op("VecDot", 2 * len(x)):
        partials = parallel_for(
            x.chunks, lambda c, lo, hi, _: float(np.dot(xv[lo:hi], yv[lo:hi])), policy=x.policy, op="VecDot"
        )
        total = 0.0
        for p in partials:
            total += p
    return total


def vec_norm2(x: ChunkedVector) -> float:
    with record_op("VecNorm", 2 * len(x)):
        return math.sqrt(vec_dot(x, x))


def seq_spmv(m: CsrMatrix, x, y: ChunkedVector, accumulate: bool = False):
    """``y <- m @ x`` (or ``y += m @ x``), each worker computing its own rows.

    ``x`` may be a plain array or a :class:`ChunkedVector`; it is read
    everywhere, while rows of ``y`` are written only by their owning chunk.
    """
    xv = x.values if isinstance(x, ChunkedVector) else np.asarray(x, dtype=np.float64)
    if m.n_cols != xv.size:
        raise ValueError(f"matrix has {m.n_cols} columns, x has {xv.size} entries")
    if m.n_rows != len(y):
        raise ValueError(f"matrix has {m.n_rows} rows, y has {len(y)} entries")
    rp, ci, va = m.row_ptr, m.col_idx, m.values

    def body(c, lo, hi, dst):
        a, b = rp[lo], rp[hi]
        if a == b:
            if not accumulate:
                dst[lo:hi] = 0.0
            return
        prod = va[a:b] * xv[ci[a:b]]
        counts = np.diff(rp[lo:hi + 1])
        nz = counts > 0
        sums = np.add.reduceat(prod, rp[lo:hi][nz] - a)
        if accumulate:
            seg = dst[lo:hi]
            seg[nz] += sums
        else:
            row = np.zeros(hi - lo)
            row[nz] = sums
            dst[lo:hi] = row

    with record_op("MatMult", 2 * m.nnz):
        parallel_for(y.chunks, body, y.values, policy=y.policy, op="MatMult")


def mat_get_diagonal(m: CsrMatrix) -> np.ndarray:
    """Diagonal entries, 0.0 where structurally absent."""
    if m.n_rows != m.n_cols:
        raise ValueError(f"square matrix required, got {m.n_rows}x{m.n_cols}")
    d = np.zeros(m.n_rows)
    rows = m.row_indices()
    on = rows == m.col_idx
    d[rows[on]] = m.values[on]
    return d
