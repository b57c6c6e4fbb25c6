import numpy as np
import pytest

from hybridsparse import CsrMatrix, RankGroup, build_scatter_plan, partition_rows, split_dist
from hybridsparse.generators import random_sparse

# The 4x4 matrix used throughout the layout/kernels/comm examples.
EXAMPLE_ENTRIES = [(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 4.0), (2, 3, 5.0), (3, 3, 6.0)]


def example_matrix() -> CsrMatrix:
    r, c, v = zip(*EXAMPLE_ENTRIES)
    return CsrMatrix.from_coo(4, 4, r, c, v)


def brute_ghosts(dense: np.ndarray, bounds) -> list[set]:
    """Oracle: for each block of rows, the set of foreign columns it touches."""
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        cols = set(np.nonzero(dense[lo:hi].any(axis=0))[0].tolist())
        out.append({j for j in cols if not lo <= j < hi})
    return out


def componentwise_error(y, ref, scale) -> float:
    """max_i |y_i - ref_i| / scale_i, with scale = |A| |x| (0/0 counts as 0)."""
    diff = np.abs(np.asarray(y) - np.asarray(ref))
    if np.any(diff[scale == 0] != 0):
        return np.inf
    nz = scale > 0
    return float((diff[nz] / scale[nz]).max(initial=0.0))


def run_dist_spmv(m, x, ranks, threads, overlap=True, **group_kw):
    from hybridsparse import dist_spmv

    dm = split_dist(m, partition_rows(m.n_rows, ranks), threads)
    plan = build_scatter_plan(dm)
    with RankGroup(ranks, threads, **group_kw) as g:
        xd = g.vector(dm, x)
        yd = g.vector(dm)
        g.run(lambda ctx: dist_spmv(ctx, dm, xd, yd, plan, overlap=overlap))
    return yd.to_global()


def random_matrices(count=20, max_n=64, seed=1, density=0.15):
    sizes = np.random.default_rng(seed).integers(2, max_n + 1, count)
    return [random_sparse(int(n), density, seed=s) for s, n in enumerate(sizes)]


@pytest.fixture
def example():
    return example_matrix()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
