"""Hybrid rank/thread sparse linear algebra at desk scale.

Rows of a sparse matrix are split over simulated ranks, each rank's rows
over a static schedule of worker threads. Distributed matrix-vector
products overlap the ghost exchange with the on-diagonal multiply, and the
CG/GMRES solvers are written purely in terms of those kernels.
"""

from .comm import DistVector, RankGroup, allreduce_sum, dist_dot, dist_norm2, dist_spmv, scatter_begin, scatter_end
from .generators import generate_convdiff2d, generate_poisson2d, random_shuffle, random_sparse, tridiagonal
from .kernels import ChunkedVector, ThreadingPolicy, alloc_zeroed, seq_spmv
from .layout import (
    ChunkMap,
    DistMatrix,
    RowLayout,
    ScatterPlan,
    build_scatter_plan,
    chunk_ranges,
    ghost_volume,
    partition_rows,
    split_dist,
)
from .perflog import PerfLog, Recorder
from .solvers import Jacobi, SolveResult, SolverConfig, cg_solve, gmres_solve, solve
from .sparse import (
    CsrMatrix,
    Permutation,
    bandwidth,
    load_matrix_market,
    permute,
    rcm_order,
    write_matrix_market,
)

__version__ = "0.1.0"
