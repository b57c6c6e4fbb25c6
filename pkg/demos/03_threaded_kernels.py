"""
Chunk-owned vector kernels and isolation checking
==================================================

Vectors are allocated so that each worker zeroes, and afterwards only
ever writes, its own chunk. Results do not depend on the thread count
except for reductions, whose partial sums are combined in chunk order.
"""

import numpy as np

from hybridsparse import ThreadingPolicy, alloc_zeroed, chunk_ranges, seq_spmv
from hybridsparse.generators import generate_poisson2d
from hybridsparse.kernels import ChunkedVector, parallel_for, vec_axpy, vec_dot, vec_norm2
from hybridsparse.perflog import Recorder, recording

rng = np.random.default_rng(0)
x_arr, y_arr = rng.uniform(-1, 1, 10_000), rng.uniform(-1, 1, 10_000)

# Dot products at several chunk counts agree to rounding error
for threads in (1, 2, 4, 8):
    pol = ThreadingPolicy(threads)
    x, y = ChunkedVector.from_array(x_arr, pol), ChunkedVector.from_array(y_arr, pol)
    print(f"threads={threads}: dot={vec_dot(x, y)!r} norm={vec_norm2(x)!r}")

# Below the size threshold kernels run on the calling thread only
small = alloc_zeroed(100, ThreadingPolicy(4, size_threshold=1000))
print("chunks below threshold:", small.chunks.thread_ranges)

# With an isolation-checking recorder every parallel region is verified:
# each worker writes into a private copy and foreign writes are reported.
rec = Recorder(check_isolation=True)
A = generate_poisson2d(32)
with recording(rec):
    pol = ThreadingPolicy(4)
    x = ChunkedVector.from_array(rng.uniform(size=A.n_rows), pol)
    y = alloc_zeroed(A.n_rows, pol)
    seq_spmv(A, x, y)
    vec_axpy(y, 2.0, x)
print("regions checked:", rec.isolation_checks, "violations:", rec.violations)

# A kernel that writes one element past its chunk is caught


def sloppy(c, lo, hi, dst):
    dst[lo:min(hi + 1, len(dst))] = c


rec = Recorder(check_isolation=True)
with recording(rec):
    parallel_for(chunk_ranges(12, 3), sloppy, np.zeros(12), op="sloppy")
print("sloppy kernel violations (op, chunk, index):", rec.violations)
