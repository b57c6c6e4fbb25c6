"""In-process rank groups, ghost exchange and distributed vector operations.

A :class:`RankGroup` runs one thread per simulated rank; ranks talk only
through per-pair FIFO channels. Every collective stamps its messages with
an operation name and a per-rank sequence number, so ranks that call
collectives in different orders fail loudly instead of exchanging the
wrong data.
"""

from __future__ import annotations

import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .kernels import (
    ChunkedVector,
    ThreadingPolicy,
    alloc_zeroed,
    install_pools,
    seq_spmv,
    vec_dot,
)
from .layout import DistMatrix, RowLayout, ScatterPlan
from .perflog import Recorder, record_op, recording

__all__ = [
    "CommError",
    "CommTimeoutError",
    "CollectiveMismatchError",
    "ScatterStateError",
    "RankGroup",
    "RankContext",
    "DistVector",
    "allreduce_sum",
    "scatter_begin",
    "scatter_end",
    "dist_spmv",
    "dist_dot",
    "dist_norm2",
]


class CommError(RuntimeError):
    pass


class CommTimeoutError(CommError):
    """A rank waited longer than the group timeout for a matching message."""


class CollectiveMismatchError(CommError):
    """Ranks disagree on which collective operation comes next."""


class ScatterStateError(CommError):
    """Scatter begin/end misuse: end without begin, or owned data changed in between."""


class _Aborted(CommError):
    pass


class RankContext:
    """Handle given to the per-rank function executed by :meth:`RankGroup.run`."""

    def __init__(self, group: "RankGroup", rank: int):
        self.group = group
        self.rank = rank
        self.n_ranks = group.n_ranks
        self.seq = 0

    @property
    def policy(self) -> ThreadingPolicy:
        return self.group.policy

    @property
    def recorder(self) -> Recorder:
        return self.group.recorders[self.rank]

    def next_tag(self, name: str) -> tuple[str, int]:
        self.seq += 1
        return (name, self.seq)

    def send(self, dst: int, tag, payload):
        self.group._channels[(self.rank, dst)].put((tag, payload))

    def recv(self, src: int, tag):
        g = self.group
        deadline = time.monotonic() + g.timeout
        chan = g._channels[(src, self.rank)]
        while True:
            if g._abort.is_set():
                raise _Aborted(f"rank {self.rank}: group aborted")
            try:
                got_tag, payload = chan.get(timeout=0.02)
                break
            except queue.Empty:
                if time.monotonic() > deadline:
                    raise CommTimeoutError(
                        f"rank {self.rank} timed out after {g.timeout}s waiting for {tag} from rank {src}"
                    ) from None
        if got_tag != tag:
            raise CollectiveMismatchError(f"rank {self.rank} expected {tag} from rank {src}, got {got_tag}")
        return payload


class RankGroup:
    """``n_ranks`` simulated processes with ``threads_per_rank`` workers each.

    Examples
    --------
    >>> with RankGroup(2, 1) as g:
    ...     g.run(lambda ctx: allreduce_sum(ctx, ctx.rank + 1.0))
    [3.0, 3.0]
    """

    def __init__(self, n_ranks: int, threads_per_rank: int = 1, *, size_threshold: int = 0, parallel: bool = True,
                 timeout: float = 30.0, instrument: bool = False):
        if n_ranks < 1:
            raise ValueError("n_ranks must be >= 1")
        self.n_ranks = n_ranks
        self.threads_per_rank = threads_per_rank
        self.policy = ThreadingPolicy(threads_per_rank, size_threshold, parallel)
        self.timeout = timeout
        self.instrument = instrument
        self._abort = threading.Event()
        self._pools = [{} for _ in range(n_ranks)]
        self._executor = ThreadPoolExecutor(n_ranks, thread_name_prefix="rank")
        self._new_channels()
        self.reset_recorders()

    def _new_channels(self):
        self._channels = {
            (s, d): queue.Queue() for s in range(self.n_ranks) for d in range(self.n_ranks) if s != d
        }

    def reset_recorders(self, instrument: bool | None = None):
        if instrument is not None:
            self.instrument = instrument
        self.recorders = [Recorder(check_isolation=self.instrument) for _ in range(self.n_ranks)]

    def run(self, fn, *args, **kwargs) -> list:
        """Execute ``fn(ctx, *args, **kwargs)`` on every rank; return the per-rank results."""
        self._abort.clear()

        def main(rank):
            ctx = RankContext(self, rank)
            install_pools(self._pools[rank])
            try:
                with recording(self.recorders[rank]):
                    return fn(ctx, *args, **kwargs)
            except BaseException:
                self._abort.set()
                raise

        futures = [self._executor.submit(main, r) for r in range(self.n_ranks)]
        results, errors = [], []
        for f in futures:
            try:
                results.append(f.result())
            except BaseException as exc:  # noqa: BLE001
                errors.append(exc)
        if errors:
            self._new_channels()
            real = [e for e in errors if not isinstance(e, _Aborted)]
            raise (real or errors)[0]
        return results

    def vector(self, dm: DistMatrix, values=None) -> "DistVector":
        """Distributed vector matching ``dm`` and this group's threading policy."""
        if dm.n_ranks != self.n_ranks:
            raise ValueError(f"matrix is split over {dm.n_ranks} ranks, group has {self.n_ranks}")
        if dm.threads_per_rank != self.threads_per_rank:
            raise ValueError("matrix chunking does not match threads_per_rank")
        if values is None:
            return DistVector.zeros(dm, self.policy)
        return DistVector.from_global(values, dm, self.policy)

    def close(self):
        self._executor.shutdown(wait=True)
        for cache in self._pools:
            for pool in cache.values():
                pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class DistVector:
    """Per-rank owned slices plus ghost buffers sized for one :class:`DistMatrix`."""

    def __init__(self, layout: RowLayout, owned: list[ChunkedVector], ghost: list[ChunkedVector]):
        if len(owned) != layout.n_ranks or len(ghost) != layout.n_ranks:
            raise ValueError("one owned and one ghost part per rank required")
        for r, v in enumerate(owned):
            if len(v) != layout.size(r):
                raise ValueError(f"rank {r}: owned length {len(v)} != layout size {layout.size(r)}")
        self.layout = layout
        self.owned = owned
        self.ghost = ghost
        self._pending: list = [None] * layout.n_ranks

    @classmethod
    def zeros(cls, dm: DistMatrix, policy: ThreadingPolicy | None = None) -> "DistVector":
        policy = policy or ThreadingPolicy(dm.threads_per_rank)
        owned = [alloc_zeroed(b.n_owned, policy) for b in dm.blocks]
        ghost = [alloc_zeroed(b.n_ghost, policy) for b in dm.blocks]
        return cls(dm.layout, owned, ghost)

    @classmethod
    def from_global(cls, values, dm: DistMatrix, policy: ThreadingPolicy | None = None) -> "DistVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (dm.n_global,):
            raise ValueError(f"expected {dm.n_global} values, got shape {values.shape}")
        v = cls.zeros(dm, policy)
        for r, (lo, hi) in enumerate(dm.layout.rank_ranges):
            v.owned[r].values[:] = values[lo:hi]
        return v

    def local(self, ctx: RankContext) -> ChunkedVector:
        return self.owned[ctx.rank]

    def to_global(self) -> np.ndarray:
        return np.concatenate([v.values for v in self.owned]) if self.owned else np.empty(0)

    def __len__(self):
        return self.layout.n_global


def allreduce_sum(ctx: RankContext, value: float) -> float:
    """Sum one scalar per rank in ascending rank order; every rank gets the same result."""
    with record_op("AllReduce"):
        ctx.recorder.reductions += 1
        tag = ctx.next_tag("allreduce")
        value = float(value)
        for dst in range(ctx.n_ranks):
            if dst != ctx.rank:
                ctx.send(dst, tag, value)
        partials = [value if src == ctx.rank else ctx.recv(src, tag) for src in range(ctx.n_ranks)]
        total = partials[0]
        for p in partials[1:]:
            total += p
        return total


def scatter_begin(ctx: RankContext, x: DistVector, plan: ScatterPlan):
    """Post this rank's ghost sends; does not wait for incoming data."""
    if x._pending[ctx.rank] is not None:
        raise ScatterStateError(f"rank {ctx.rank}: scatter already in progress")
    tag = ctx.next_tag("scatter")
    owned = x.owned[ctx.rank].values
    rec = ctx.recorder
    for e in plan.sends_from(ctx.rank):
        ctx.send(e.dst, tag, owned[e.send_idx].copy())
        rec.messages += 1
        rec.ghost_elements += len(e)
    snapshot = owned.copy() if rec.check_isolation else None
    x._pending[ctx.rank] = (tag, snapshot)


def scatter_end(ctx: RankContext, x: DistVector, plan: ScatterPlan):
    """Block until every ghost slot of this rank has been filled."""
    state = x._pending[ctx.rank]
    if state is None:
        raise ScatterStateError(f"rank {ctx.rank}: scatter_end called without scatter_begin")
    x._pending[ctx.rank] = None
    tag, snapshot = state
    ghost = x.ghost[ctx.rank].values
    for e in plan.recvs_to(ctx.rank):
        ghost[e.recv_slots] = ctx.recv(e.src, tag)
    if snapshot is not None:
        if not np.array_equal(snapshot.view(np.int64), x.owned[ctx.rank].values.view(np.int64)):
            raise ScatterStateError(f"rank {ctx.rank}: owned data modified between scatter_begin and scatter_end")


def dist_spmv(ctx: RankContext, A: DistMatrix, x: DistVector, y: DistVector, plan: ScatterPlan,
              overlap: bool = True):
    """``y <- A @ x``: diagonal multiply overlapped with the ghost exchange, then off-diagonal."""
    blk = A.blocks[ctx.rank]
    if x.layout != A.layout or y.layout != A.layout:
        raise ValueError("vector layout does not match matrix layout")
    xg = x.ghost[ctx.rank]
    if len(xg) != blk.n_ghost:
        raise ValueError(f"rank {ctx.rank}: ghost buffer has {len(xg)} slots, matrix needs {blk.n_ghost}")
    with record_op("MatMult", 2 * (blk.diag.nnz + blk.offdiag.nnz)):
        scatter_begin(ctx, x, plan)
        if overlap:
            seq_spmv(blk.diag, x.owned[ctx.rank], y.owned[ctx.rank], accumulate=False)
            scatter_end(ctx, x, plan)
        else:
            scatter_end(ctx, x, plan)
            seq_spmv(blk.diag, x.owned[ctx.rank], y.owned[ctx.rank], accumulate=False)
        if blk.offdiag.nnz:
            seq_spmv(blk.offdiag, xg, y.owned[ctx.rank], accumulate=True)


def dist_dot(ctx: RankContext, x: DistVector, y: DistVector) -> float:
    if x.layout != y.layout:
        raise ValueError("layout mismatch")
    xl = x.owned[ctx.rank]
    with record_op("VecDot", 2 * len(xl)):
        return allreduce_sum(ctx, vec_dot(xl, y.owned[ctx.rank]))


def dist_norm2(ctx: RankContext, x: DistVector) -> float:
    xl = x.owned[ctx.rank]
    with record_op("VecNorm", 2 * len(xl)):
        return float(np.sqrt(allreduce_sum(ctx, vec_dot(xl, xl))))
