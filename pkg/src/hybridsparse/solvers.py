"""Preconditioned CG and restarted GMRES on top of the kernel/comm primitives.

The solvers never touch vector storage directly: every vector update is a
``vec_*`` kernel on the rank's owned slice, and every global quantity comes
from :func:`~hybridsparse.comm.dist_dot` / :func:`~hybridsparse.comm.dist_norm2`,
so all ranks take identical convergence decisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .comm import DistVector, RankContext, RankGroup, dist_dot, dist_norm2, dist_spmv
from .kernels import (
    ZeroDivisorError,
    vec_aypx,
    vec_axpy,
    vec_copy,
    vec_pointwise_divide,
    vec_scale,
    vec_set,
    vec_waxpy,
    mat_get_diagonal,
)
from .layout import DistMatrix, ScatterPlan, build_scatter_plan

__all__ = [
    "BreakdownError",
    "SolverConfig",
    "SolveResult",
    "Jacobi",
    "jacobi_apply",
    "cg_solve",
    "gmres_solve",
    "solve",
    "SOLVER_OPS",
]

# Every operation name a solver may record; anything else breaks the layering.
SOLVER_OPS = frozenset(
    {"MatMult", "VecDot", "VecNorm", "VecAXPY", "VecAYPX", "VecWAXPY", "VecScale", "VecCopy", "VecSet",
     "VecPointwiseDivide", "AllReduce"}
)


class BreakdownError(ArithmeticError):
    def __init__(self, msg: str, index: int | None = None):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class SolverConfig:
    method: Literal["cg", "gmres"] = "cg"
    rtol: float = 1e-5
    atol: float = 1e-50
    max_iters: int = 10_000
    restart: int = 30
    norm_type: Literal["preconditioned", "unpreconditioned"] = "preconditioned"

    def __post_init__(self):
        if self.method not in ("cg", "gmres"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol < 0 or self.atol < 0 or (self.rtol == 0 and self.atol == 0):
            raise ValueError("rtol and atol must be >= 0 and not both zero")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.norm_type not in ("preconditioned", "unpreconditioned"):
            raise ValueError(f"unknown norm_type {self.norm_type!r}")


@dataclass
class SolveResult:
    x: DistVector
    converged: bool
    reason: Literal["rtol", "atol", "max_iters", "breakdown"]
    iterations: int
    residual_history: list = field(default_factory=list)
    # GMRES only: (iteration, rotation estimate, recomputed residual) at each restart
    restart_checks: list = field(default_factory=list)


class Jacobi:
    """Diagonal scaling ``z = r / diag(A)``."""

    def __init__(self, A: DistMatrix, group: RankGroup):
        d = DistVector.zeros(A, group.policy)
        for blk, part in zip(A.blocks, d.owned):
            diag = mat_get_diagonal(blk.diag)
            zero = np.flatnonzero(diag == 0.0)
            if zero.size:
                g = blk.row_range[0] + int(zero[0])
                raise BreakdownError(f"zero diagonal entry at global row {g}", g)
            part.values[:] = diag
        self.diagonal = d

    def apply(self, ctx: RankContext, r: DistVector, z: DistVector):
        jacobi_apply(ctx, self.diagonal, r, z)


def jacobi_apply(ctx: RankContext, d: DistVector, r: DistVector, z: Optional[DistVector] = None) -> DistVector:
    """``z[i] = r[i] / d[i]`` on this rank's rows."""
    if z is None:
        z = r
    try:
        vec_pointwise_divide(z.owned[ctx.rank], r.owned[ctx.rank], d.owned[ctx.rank])
    except ZeroDivisorError as exc:
        g = d.layout.bounds[ctx.rank] + exc.index
        raise BreakdownError(f"zero diagonal entry at global row {g}", g) from None
    return z


def _precondition(ctx, pc, r, z):
    if pc is None:
        vec_copy(r.owned[ctx.rank], z.owned[ctx.rank])
    else:
        pc.apply(ctx, r, z)


def _converged(norm, norm0, cfg):
    if norm <= cfg.atol:
        return "atol"
    if norm <= cfg.rtol * norm0:
        return "rtol"
    return None


# --- CG --------------------------------------------------------------------


def _cg_rank(ctx, A, b, x, r, z, p, q, plan, cfg, pc):
    loc = ctx.rank
    vec_set(x.owned[loc], 0.0)
    vec_copy(b.owned[loc], r.owned[loc])
    _precondition(ctx, pc, r, z)
    rz = dist_dot(ctx, r, z)

    def monitored(rz):
        if cfg.norm_type == "unpreconditioned":
            return dist_norm2(ctx, r)
        return math.sqrt(rz) if rz >= 0 else math.nan

    norm0 = monitored(rz)
    history = [norm0]
    if rz < 0 or not math.isfinite(norm0):
        return history, 0, "breakdown"
    reason = _converged(norm0, norm0, cfg)
    if reason:
        return history, 0, reason

    vec_copy(z.owned[loc], p.owned[loc])
    for it in range(1, cfg.max_iters + 1):
        dist_spmv(ctx, A, p, q, plan)
        pq = dist_dot(ctx, p, q)
        if not pq > 0:
            return history, it - 1, "breakdown"
        alpha = rz / pq
        vec_axpy(x.owned[loc], alpha, p.owned[loc])
        vec_axpy(r.owned[loc], -alpha, q.owned[loc])
        _precondition(ctx, pc, r, z)
        rz_new = dist_dot(ctx, r, z)
        norm = monitored(rz_new)
        history.append(norm)
        if not math.isfinite(norm):
            return history, it, "breakdown"
        reason = _converged(norm, norm0, cfg)
        if reason:
            return history, it, reason
        beta = rz_new / rz
        rz = rz_new
        vec_aypx(p.owned[loc], beta, z.owned[loc])
    return history, cfg.max_iters, "max_iters"


def cg_solve(group: RankGroup, A: DistMatrix, b: DistVector, cfg: SolverConfig | None = None,
             precond=None, plan: ScatterPlan | None = None) -> SolveResult:
    """Preconditioned conjugate gradients from a zero initial guess.

    ``A`` must be symmetric positive definite. The monitored norm is
    ``sqrt(r . z)`` (``norm_type="preconditioned"``) or ``||r||``.
    """
    cfg = cfg or SolverConfig(method="cg")
    plan = plan or build_scatter_plan(A)
    x, r, z, p, q = (group.vector(A) for _ in range(5))
    out = group.run(_cg_rank, A, b, x, r, z, p, q, plan, cfg, precond)
    history, iters, reason = out[0]
    return SolveResult(x, reason in ("rtol", "atol"), reason, iters, history)


# --- GMRES -----------------------------------------------------------------


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    h = math.hypot(a, b)
    return a / h, b / h


def _update_solution(ctx, x, V, H, g, j):
    """x += V[:, :j] @ y with y solving the leading j x j upper-triangular system."""
    y = np.zeros(j)
    for i in range(j - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:j] @ y[i + 1:j]) / H[i, i]
    for i in range(j):
        vec_axpy(x.owned[ctx.rank], y[i], V[i].owned[ctx.rank])


def _gmres_rank(ctx, A, b, x, w, t, V, plan, cfg, pc):
    loc = ctx.rank
    m = cfg.restart
    vec_set(x.owned[loc], 0.0)

    def residual(into):
        # into <- M^-1 (b - A x)
        dist_spmv(ctx, A, x, t, plan)
        vec_waxpy(w.owned[loc], -1.0, t.owned[loc], b.owned[loc])
        _precondition(ctx, pc, w, into)

    history = []
    checks = []
    norm0 = None
    it = 0
    while True:
        residual(V[0])
        beta = dist_norm2(ctx, V[0])
        if norm0 is None:
            norm0 = beta
            history.append(beta)
            reason = _converged(beta, norm0, cfg)
            if reason:
                return history, 0, reason, checks
        else:
            checks.append((it, history[-1], beta))
        if beta == 0.0:
            return history, it, "atol", checks
        vec_scale(V[0].owned[loc], 1.0 / beta)

        H = np.zeros((m + 1, m))
        g = np.zeros(m + 1)
        g[0] = beta
        cs = np.zeros(m)
        sn = np.zeros(m)
        j = 0
        reason = None
        while j < m and it < cfg.max_iters:
            dist_spmv(ctx, A, V[j], t, plan)
            _precondition(ctx, pc, t, V[j + 1])
            for i in range(j + 1):
                H[i, j] = dist_dot(ctx, V[j + 1], V[i])
                vec_axpy(V[j + 1].owned[loc], -H[i, j], V[i].owned[loc])
            h_next = dist_norm2(ctx, V[j + 1])
            H[j + 1, j] = h_next
            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j += 1
            it += 1
            est = abs(g[j])
            history.append(est)
            # happy breakdown: the Krylov space is invariant, the update is exact
            if h_next <= 1e-14 * beta:
                reason = _converged(est, norm0, cfg) or "rtol"
                break
            reason = _converged(est, norm0, cfg)
            if reason:
                break
            vec_scale(V[j].owned[loc], 1.0 / h_next)
        _update_solution(ctx, x, V, H, g, j)
        if reason:
            return history, it, reason, checks
        if it >= cfg.max_iters:
            return history, it, "max_iters", checks


def gmres_solve(group: RankGroup, A: DistMatrix, b: DistVector, cfg: SolverConfig | None = None,
                precond=None, plan: ScatterPlan | None = None) -> SolveResult:
    """Left-preconditioned restarted GMRES from a zero initial guess.

    Arnoldi uses modified Gram-Schmidt; the least-squares problem is kept
    triangular with Givens rotations, whose running residual estimate is
    the monitored norm. The residual is recomputed explicitly at each
    restart.
    """
    cfg = cfg or SolverConfig(method="gmres")
    if cfg.norm_type == "unpreconditioned" and precond is not None:
        raise ValueError("left-preconditioned GMRES only monitors the preconditioned residual norm")
    plan = plan or build_scatter_plan(A)
    x, w, t = (group.vector(A) for _ in range(3))
    V = [group.vector(A) for _ in range(cfg.restart + 1)]
    out = group.run(_gmres_rank, A, b, x, w, t, V, plan, cfg, precond)
    history, iters, reason, checks = out[0]
    return SolveResult(x, reason in ("rtol", "atol"), reason, iters, history, checks)


def solve(group: RankGroup, A: DistMatrix, b: DistVector, cfg: SolverConfig, precond=None,
          plan: ScatterPlan | None = None) -> SolveResult:
    fn = cg_solve if cfg.method == "cg" else gmres_solve
    return fn(group, A, b, cfg, precond, plan)
