"""
Sparse matrices, Matrix Market files and bandwidth reduction
=============================================================

Build a Poisson matrix, save and reload it, scramble its numbering and
recover a narrow band with reverse Cuthill-McKee.
"""

import tempfile
from pathlib import Path

import numpy as np

from hybridsparse import bandwidth, load_matrix_market, permute, rcm_order, write_matrix_market
from hybridsparse.generators import generate_poisson2d, random_shuffle

# A 5-point Laplacian on a 12x12 grid: n = 144 unknowns, bandwidth = grid width
A = generate_poisson2d(12)
print("n =", A.n_rows, "nnz =", A.nnz, "bandwidth =", bandwidth(A))

# Matrix Market round trip. Values are written with full precision,
# so the reloaded matrix is bitwise identical.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "poisson12.mtx"
    write_matrix_market(A, path, comment="12x12 Poisson")
    B = load_matrix_market(path)
    print("round trip identical:", B.equals(A))

# A random relabelling destroys the band
S, p = random_shuffle(A, seed=1)
print("bandwidth after random shuffle:", bandwidth(S))

# RCM restores it. The permutation is applied symmetrically (rows and columns).
q = rcm_order(S)
R = permute(S, q)
print("bandwidth after RCM:", bandwidth(R))

# The reordered system has the same solution once b and x are relabelled too
b = np.arange(A.n_rows, dtype=float)
x = np.linalg.solve(A.to_dense(), b)
xr = np.linalg.solve(R.to_dense(), q.apply(p.apply(b)))
print("solutions agree:", np.allclose(q.apply(p.apply(x)), xr))
