"""Row partitioning, on/off-diagonal splitting and ghost scatter plans.

Every threaded object in the package is divided with :func:`chunk_ranges`,
so two objects of the same length always share the same chunk boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import CsrMatrix

__all__ = [
    "ChunkMap",
    "RowLayout",
    "RankBlock",
    "DistMatrix",
    "PlanEntry",
    "ScatterPlan",
    "GhostVolume",
    "chunk_ranges",
    "partition_rows",
    "split_dist",
    "build_scatter_plan",
    "ghost_volume",
]


def _balanced_bounds(n: int, k: int) -> tuple[int, ...]:
    if k < 1:
        raise ValueError(f"number of parts must be >= 1, got {k}")
    if n < 0:
        raise ValueError(f"length must be >= 0, got {n}")
    q, r = divmod(n, k)
    bounds = [0]
    for c in range(k):
        bounds.append(bounds[-1] + q + (1 if c < r else 0))
    return tuple(bounds)


@dataclass(frozen=True)
class ChunkMap:
    """Static schedule over ``[0, n_local)``: chunk ``c`` is ``[bounds[c], bounds[c+1])``."""

    n_local: int
    bounds: tuple[int, ...]

    @property
    def n_chunks(self) -> int:
        return len(self.bounds) - 1

    @property
    def thread_ranges(self) -> list[tuple[int, int]]:
        return list(zip(self.bounds[:-1], self.bounds[1:]))

    def __iter__(self):
        return iter(self.thread_ranges)

    def __len__(self):
        return self.n_chunks

    def owner(self, i: int) -> int:
        """Chunk that owns local index ``i``."""
        if not 0 <= i < self.n_local:
            raise IndexError(i)
        return int(np.searchsorted(self.bounds, i, side="right")) - 1


def chunk_ranges(n: int, k: int) -> ChunkMap:
    """Split ``n`` items over ``k`` workers; the first ``n % k`` chunks get one extra."""
    return ChunkMap(n, _balanced_bounds(n, k))


@dataclass(frozen=True)
class RowLayout:
    """Contiguous ownership of global rows by ranks, in rank order."""

    n_global: int
    bounds: tuple[int, ...]

    def __post_init__(self):
        b = self.bounds
        if len(b) < 2 or b[0] != 0 or b[-1] != self.n_global:
            raise ValueError("layout bounds must start at 0 and end at n_global")
        if any(hi < lo for lo, hi in zip(b[:-1], b[1:])):
            raise ValueError("layout bounds must be non-decreasing")

    @property
    def n_ranks(self) -> int:
        return len(self.bounds) - 1

    @property
    def rank_ranges(self) -> list[tuple[int, int]]:
        return list(zip(self.bounds[:-1], self.bounds[1:]))

    def size(self, rank: int) -> int:
        return self.bounds[rank + 1] - self.bounds[rank]

    def owner_of(self, rows) -> np.ndarray:
        """Owning rank of each global row index (binary search over bounds)."""
        rows = np.asarray(rows)
        # side="right" skips empty ranks sitting on the same boundary
        return np.searchsorted(self.bounds, rows, side="right") - 1

    @classmethod
    def from_bounds(cls, bounds) -> "RowLayout":
        bounds = tuple(int(b) for b in bounds)
        return cls(bounds[-1], bounds)


def partition_rows(n_global: int, n_ranks: int) -> RowLayout:
    """Balanced contiguous row blocks, same split rule as :func:`chunk_ranges`."""
    return RowLayout(n_global, _balanced_bounds(n_global, n_ranks))


@dataclass(frozen=True, eq=False)
class RankBlock:
    rank: int
    row_range: tuple[int, int]
    diag: CsrMatrix
    offdiag: CsrMatrix
    ghost_cols: np.ndarray
    chunks: ChunkMap

    @property
    def n_owned(self) -> int:
        return self.row_range[1] - self.row_range[0]

    @property
    def n_ghost(self) -> int:
        return int(self.ghost_cols.size)


@dataclass(frozen=True, eq=False)
class DistMatrix:
    """A square matrix split by rows into per-rank diagonal and off-diagonal parts."""

    layout: RowLayout
    blocks: tuple[RankBlock, ...]
    threads_per_rank: int
    n_global: int
    nnz: int

    @property
    def n_ranks(self) -> int:
        return self.layout.n_ranks

    def __getitem__(self, rank: int) -> RankBlock:
        return self.blocks[rank]

    def to_global(self) -> CsrMatrix:
        """Re-expand all ranks' parts to global coordinates."""
        rows, cols, vals = [], [], []
        for blk in self.blocks:
            lo = blk.row_range[0]
            rows += [blk.diag.row_indices() + lo, blk.offdiag.row_indices() + lo]
            cols += [blk.diag.col_idx + lo, blk.ghost_cols[blk.offdiag.col_idx]]
            vals += [blk.diag.values, blk.offdiag.values]
        n = self.n_global
        return CsrMatrix.from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def split_dist(m: CsrMatrix, layout: RowLayout, threads_per_rank: int = 1) -> DistMatrix:
    """Split owned rows by column ownership and compact ghost columns."""
    if m.n_rows != m.n_cols:
        raise ValueError(f"square matrix required, got {m.n_rows}x{m.n_cols}")
    if layout.n_global != m.n_rows:
        raise ValueError(f"layout covers {layout.n_global} rows, matrix has {m.n_rows}")
    if threads_per_rank < 1:
        raise ValueError("threads_per_rank must be >= 1")

    all_rows = m.row_indices()
    blocks = []
    for rank, (lo, hi) in enumerate(layout.rank_ranges):
        a, b = int(m.row_ptr[lo]), int(m.row_ptr[hi])
        rows = all_rows[a:b] - lo
        cols = m.col_idx[a:b]
        vals = m.values[a:b]
        owned = (cols >= lo) & (cols < hi)
        n_own = hi - lo
        diag = CsrMatrix.from_coo(n_own, n_own, rows[owned], cols[owned] - lo, vals[owned])
        ghost_cols = np.unique(cols[~owned])
        offdiag = CsrMatrix.from_coo(
            n_own, ghost_cols.size, rows[~owned], np.searchsorted(ghost_cols, cols[~owned]), vals[~owned]
        )
        ghost_cols.flags.writeable = False
        blocks.append(RankBlock(rank, (lo, hi), diag, offdiag, ghost_cols, chunk_ranges(n_own, threads_per_rank)))
    return DistMatrix(layout, tuple(blocks), threads_per_rank, m.n_rows, m.nnz)


@dataclass(frozen=True, eq=False)
class PlanEntry:
    """One message: ``src`` sends ``owned[send_idx]`` into ``ghost[recv_slots]`` on ``dst``."""

    src: int
    dst: int
    send_idx: np.ndarray
    recv_slots: np.ndarray

    def __len__(self):
        return int(self.send_idx.size)


@dataclass(frozen=True, eq=False)
class ScatterPlan:
    n_ranks: int
    entries: dict = field(default_factory=dict)  # (src, dst) -> PlanEntry

    def sends_from(self, rank: int) -> list[PlanEntry]:
        return [e for (s, _), e in sorted(self.entries.items()) if s == rank]

    def recvs_to(self, rank: int) -> list[PlanEntry]:
        return [e for (_, d), e in sorted(self.entries.items()) if d == rank]

    @property
    def n_messages(self) -> int:
        return len(self.entries)

    @property
    def volume(self) -> int:
        return sum(len(e) for e in self.entries.values())


def build_scatter_plan(dm: DistMatrix) -> ScatterPlan:
    """Group every rank's ghost columns by owning rank."""
    layout = dm.layout
    entries = {}
    for blk in dm.blocks:
        if blk.n_ghost == 0:
            continue
        owners = layout.owner_of(blk.ghost_cols)
        for src in np.unique(owners):
            slots = np.flatnonzero(owners == src)
            send = blk.ghost_cols[slots] - layout.bounds[src]
            entries[(int(src), blk.rank)] = PlanEntry(int(src), blk.rank, send, slots)
    return ScatterPlan(dm.n_ranks, entries)


@dataclass(frozen=True)
class GhostVolume:
    per_rank: tuple[int, ...]
    total: int
    messages: int


def ghost_volume(dm: DistMatrix, plan: ScatterPlan | None = None) -> GhostVolume:
    plan = build_scatter_plan(dm) if plan is None else plan
    per_rank = tuple(blk.n_ghost for blk in dm.blocks)
    return GhostVolume(per_rank, sum(per_rank), plan.n_messages)
