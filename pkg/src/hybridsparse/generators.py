"""Synthetic test matrices."""

from __future__ import annotations

import numpy as np

from .sparse import CsrMatrix, Permutation, permute

__all__ = ["generate_poisson2d", "generate_convdiff2d", "tridiagonal", "random_sparse", "random_shuffle"]


def _grid_stencil(k: int, center: float, west: float, east: float, south: float, north: float) -> CsrMatrix:
    if k < 2:
        raise ValueError(f"grid size must be >= 2, got {k}")
    idx = np.arange(k * k).reshape(k, k)  # idx[y, x]
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.full(k * k, center)]
    for (dy, dx), v in (((0, -1), west), ((0, 1), east), ((-1, 0), south), ((1, 0), north)):
        src = idx[max(0, -dy):k - max(0, dy), max(0, -dx):k - max(0, dx)]
        dst = idx[max(0, dy):k - max(0, -dy), max(0, dx):k - max(0, -dx)]
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.full(src.size, v))
    n = k * k
    return CsrMatrix.from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def generate_poisson2d(k: int) -> CsrMatrix:
    """5-point Laplacian on a ``k x k`` grid with Dirichlet boundaries (SPD, n = k**2)."""
    return _grid_stencil(k, 4.0, -1.0, -1.0, -1.0, -1.0)


def generate_convdiff2d(k: int, peclet: float = 1.0) -> CsrMatrix:
    """Poisson plus first-order upwind convection with velocity (+1, +1).

    ``peclet`` is the cell Peclet number: the west and south couplings
    become ``-1 - peclet`` and the diagonal ``4 + 2 * peclet``. The matrix
    is nonsymmetric for any ``peclet > 0`` and stays diagonally dominant
    for ``peclet >= 0``.
    """
    if peclet < 0:
        raise ValueError("peclet must be >= 0")
    return _grid_stencil(k, 4.0 + 2.0 * peclet, -1.0 - peclet, -1.0, -1.0 - peclet, -1.0)


def tridiagonal(n: int, diag: float = 2.0, off: float = -1.0) -> CsrMatrix:
    i = np.arange(n)
    rows = np.concatenate([i, i[1:], i[:-1]])
    cols = np.concatenate([i, i[:-1], i[1:]])
    vals = np.concatenate([np.full(n, diag), np.full(2 * max(n - 1, 0), off)])
    return CsrMatrix.from_coo(n, n, rows, cols, vals)


def random_sparse(n: int, density: float = 0.1, seed: int = 0, diag: bool = True) -> CsrMatrix:
    """Random square matrix with entries uniform in [-1, 1].

    With ``diag`` every diagonal entry is present, which keeps the pattern
    usable for Jacobi-style tests.
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    if diag:
        mask |= np.eye(n, dtype=bool)
    rows, cols = np.nonzero(mask)
    return CsrMatrix.from_coo(n, n, rows, cols, rng.uniform(-1.0, 1.0, rows.size))


def random_shuffle(m: CsrMatrix, seed: int = 0) -> tuple[CsrMatrix, Permutation]:
    """Symmetrically permute ``m`` by a seeded random permutation."""
    p = Permutation(np.random.default_rng(seed).permutation(m.n_rows))
    return permute(m, p), p
