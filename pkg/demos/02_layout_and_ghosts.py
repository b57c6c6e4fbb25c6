"""
Row partitions, diagonal/off-diagonal split and ghost columns
==============================================================

Each rank owns a contiguous block of rows. Its columns are split into a
local ("diagonal") block and a compacted list of foreign ("ghost")
columns whose values must be fetched from other ranks.
"""

from hybridsparse import build_scatter_plan, chunk_ranges, ghost_volume, partition_rows, split_dist
from hybridsparse.generators import generate_poisson2d

# Static schedule: the first n % k chunks get one extra item
print("10 items over 4 threads:", chunk_ranges(10, 4).thread_ranges)

A = generate_poisson2d(8)
layout = partition_rows(A.n_rows, 4)
print("rank row ranges:", layout.rank_ranges)

dm = split_dist(A, layout, threads_per_rank=2)
for blk in dm.blocks:
    print(f"rank {blk.rank}: rows {blk.row_range}, diag nnz {blk.diag.nnz}, "
          f"offdiag nnz {blk.offdiag.nnz}, ghosts {blk.ghost_cols.tolist()}")

# The split loses nothing
print("reconstruction identical:", dm.to_global().equals(A))

# Who sends what to whom during one SpMV
plan = build_scatter_plan(dm)
for (src, dst), e in sorted(plan.entries.items()):
    print(f"  {src} -> {dst}: {len(e.send_idx)} values")
gv = ghost_volume(dm, plan)
print("total ghost volume", gv.total, "in", gv.messages, "messages")
