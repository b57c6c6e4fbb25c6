import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridsparse import CsrMatrix, build_scatter_plan, chunk_ranges, ghost_volume, partition_rows, split_dist
from hybridsparse.generators import random_sparse, tridiagonal
from hybridsparse.layout import RowLayout

from conftest import brute_ghosts, example_matrix


@pytest.mark.parametrize(
    "n,k,expected",
    [
        (10, 4, [(0, 3), (3, 6), (6, 8), (8, 10)]),
        (5, 1, [(0, 5)]),
        (3, 5, [(0, 1), (1, 2), (2, 3), (3, 3), (3, 3)]),
        (0, 3, [(0, 0)] * 3),
    ],
)
def test_chunk_ranges(n, k, expected):
    assert chunk_ranges(n, k).thread_ranges == expected


def test_chunk_ranges_zero_workers():
    with pytest.raises(ValueError):
        chunk_ranges(4, 0)


@given(n=st.integers(0, 500), k=st.integers(1, 40))
def test_chunk_ranges_properties(n, k):
    cm = chunk_ranges(n, k)
    sizes = [hi - lo for lo, hi in cm]
    assert cm.n_chunks == k and sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)
    assert cm == chunk_ranges(n, k)


@pytest.mark.parametrize(
    "n,r,expected",
    [(10, 3, [(0, 4), (4, 7), (7, 10)]), (4, 1, [(0, 4)]), (4, 2, [(0, 2), (2, 4)])],
)
def test_partition_rows(n, r, expected):
    assert partition_rows(n, r).rank_ranges == expected


def test_partition_rows_zero_ranks():
    with pytest.raises(ValueError):
        partition_rows(4, 0)


def test_owner_of_skips_empty_ranks():
    layout = RowLayout.from_bounds([0, 2, 2, 4])
    assert layout.owner_of([0, 1, 2, 3]).tolist() == [0, 0, 2, 2]


def test_split_example():
    dm = split_dist(example_matrix(), partition_rows(4, 2), 1)
    r0, r1 = dm.blocks
    assert r0.diag.to_dense().tolist() == [[2, 0], [0, 3]]
    assert r0.offdiag.to_dense().tolist() == [[1], [0]]
    assert r0.ghost_cols.tolist() == [2]
    assert r1.diag.to_dense().tolist() == [[0, 5], [0, 6]]
    assert r1.offdiag.to_dense().tolist() == [[4], [0]]
    assert r1.ghost_cols.tolist() == [0]
    assert dm.to_global().equals(example_matrix())


def test_split_single_rank():
    m = random_sparse(20, 0.2, seed=2)
    dm = split_dist(m, partition_rows(20, 1), 3)
    (blk,) = dm.blocks
    assert blk.diag.equals(m)
    assert blk.offdiag.nnz == 0 and blk.n_ghost == 0
    assert blk.chunks == chunk_ranges(20, 3)


def test_split_block_diagonal_aligned():
    a = random_sparse(5, 0.5, seed=1).to_dense()
    dense = np.zeros((10, 10))
    dense[:5, :5] = a
    dense[5:, 5:] = a
    dm = split_dist(CsrMatrix.from_dense(dense), partition_rows(10, 2), 2)
    assert all(b.offdiag.nnz == 0 for b in dm.blocks)
    assert build_scatter_plan(dm).n_messages == 0


def test_split_dimension_mismatch():
    with pytest.raises(ValueError):
        split_dist(example_matrix(), partition_rows(5, 2))
    with pytest.raises(ValueError):
        split_dist(CsrMatrix.from_coo(2, 3, [], [], []), partition_rows(2, 1))


def test_scatter_plan_example():
    plan = build_scatter_plan(split_dist(example_matrix(), partition_rows(4, 2)))
    assert set(plan.entries) == {(0, 1), (1, 0)}
    e10 = plan.entries[(1, 0)]
    assert e10.send_idx.tolist() == [0] and e10.recv_slots.tolist() == [0]
    e01 = plan.entries[(0, 1)]
    assert e01.send_idx.tolist() == [0] and e01.recv_slots.tolist() == [0]


def test_scatter_plan_single_rank_empty():
    assert build_scatter_plan(split_dist(random_sparse(9, 0.4), partition_rows(9, 1))).n_messages == 0


def test_ghost_volume_examples():
    gv = ghost_volume(split_dist(example_matrix(), partition_rows(4, 2)))
    assert (gv.total, gv.messages) == (2, 2)
    gv = ghost_volume(split_dist(example_matrix(), partition_rows(4, 1)))
    assert (gv.total, gv.messages) == (0, 0)
    tri = tridiagonal(8)
    bounds = partition_rows(8, 4).bounds
    oracle = brute_ghosts(tri.to_dense(), bounds)
    gv = ghost_volume(split_dist(tri, partition_rows(8, 4)))
    assert gv.total == sum(map(len, oracle)) == 6
    assert gv.messages == 6


GRID = [(r, t) for r in (1, 2, 3, 4) for t in (1, 2, 4)]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), density=st.floats(0.0, 0.5), seed=st.integers(0, 10_000))
def test_reconstruction_and_plan_coverage(n, density, seed):
    m = random_sparse(n, density, seed=seed, diag=False)
    dense = m.to_dense()
    for ranks, threads in GRID:
        layout = partition_rows(n, ranks)
        dm = split_dist(m, layout, threads)
        assert dm.to_global().equals(m)
        oracle = brute_ghosts(dense, layout.bounds)
        for blk, want in zip(dm.blocks, oracle):
            assert set(blk.ghost_cols.tolist()) == want
            assert np.all(np.diff(blk.ghost_cols) > 0)
            lo, hi = blk.row_range
            assert not np.any((blk.ghost_cols >= lo) & (blk.ghost_cols < hi))
            if blk.diag.nnz:
                assert blk.diag.col_idx.max() < hi - lo
        # executing the plan with x[i] = i fills each ghost slot with its global index
        plan = build_scatter_plan(dm)
        filled = [np.full(b.n_ghost, -1.0) for b in dm.blocks]
        for e in plan.entries.values():
            src_lo = layout.bounds[e.src]
            assert np.all((e.send_idx >= 0) & (e.send_idx < layout.size(e.src)))
            assert np.all(filled[e.dst][e.recv_slots] == -1.0)  # covered exactly once
            filled[e.dst][e.recv_slots] = (np.arange(n, dtype=float)[src_lo:])[e.send_idx]
        for blk, f in zip(dm.blocks, filled):
            assert np.array_equal(f, blk.ghost_cols.astype(float))


def contiguous_partitions(n, max_parts):
    for k in range(1, max_parts + 1):
        for cuts in itertools.combinations(range(1, n), k - 1):
            yield (0, *cuts, n)


def total_ghosts(m, bounds):
    return ghost_volume(split_dist(m, RowLayout.from_bounds(bounds))).total


def test_ghost_monotonicity_exhaustive():
    rng = np.random.default_rng(11)
    for trial in range(6):
        n = int(rng.integers(2, 33))
        m = random_sparse(n, float(rng.uniform(0.02, 0.3)), seed=trial, diag=False)
        totals = {b: total_ghosts(m, b) for b in contiguous_partitions(n, 4)}
        for bounds, g in totals.items():
            for i in range(1, len(bounds) - 1):
                assert totals[bounds[:i] + bounds[i + 1:]] <= g
