import numpy as np
import pytest

from hybridsparse import (
    CsrMatrix,
    Jacobi,
    RankGroup,
    SolverConfig,
    cg_solve,
    gmres_solve,
    partition_rows,
    split_dist,
)
from hybridsparse.generators import generate_convdiff2d, generate_poisson2d, random_sparse
from hybridsparse.solvers import SOLVER_OPS, BreakdownError, jacobi_apply

CONFIGS = [(r, t) for r in (1, 2, 4) for t in (1, 2, 4)]


def run(method, m, b, ranks=1, threads=1, pc=False, instrument=False, **cfg):
    dm = split_dist(m, partition_rows(m.n_rows, ranks), threads)
    with RankGroup(ranks, threads, instrument=instrument) as g:
        bd = g.vector(dm, b)
        pre = Jacobi(dm, g) if pc else None
        fn = cg_solve if method == "cg" else gmres_solve
        res = fn(g, dm, bd, SolverConfig(method=method, **cfg), pre)
        return res, res.x.to_global(), g.recorders


# --- config -----------------------------------------------------------------

@pytest.mark.parametrize(
    "kw",
    [dict(rtol=0.0, atol=0.0), dict(rtol=-1.0), dict(max_iters=0), dict(restart=0), dict(method="bicg"),
     dict(norm_type="natural")],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_config_defaults():
    c = SolverConfig()
    assert (c.rtol, c.atol, c.max_iters, c.restart, c.norm_type) == (1e-5, 1e-50, 10_000, 30, "preconditioned")


# --- Jacobi -----------------------------------------------------------------

def test_jacobi_apply_examples():
    m = CsrMatrix.from_coo(2, 2, [0, 1], [0, 1], [2.0, 4.0])
    dm = split_dist(m, partition_rows(2, 2))
    with RankGroup(2) as g:
        pc = Jacobi(dm, g)
        r = g.vector(dm, [2.0, 8.0])
        z = g.vector(dm)
        g.run(lambda ctx: pc.apply(ctx, r, z))
        assert z.to_global().tolist() == [1.0, 2.0]

        ones = g.vector(dm, [1.0, 1.0])
        g.run(lambda ctx: jacobi_apply(ctx, ones, r, z))
        assert z.to_global().tolist() == [2.0, 8.0]


def test_jacobi_zero_diagonal_breakdown():
    m = CsrMatrix.from_coo(3, 3, [0, 1, 2], [0, 0, 2], [1.0, 1.0, 1.0])
    dm = split_dist(m, partition_rows(3, 2))
    with RankGroup(2) as g:
        with pytest.raises(BreakdownError) as info:
            Jacobi(dm, g)
        assert info.value.index == 1

        d = g.vector(dm, [1.0, 0.0, 1.0])
        r = g.vector(dm, [1.0, 1.0, 1.0])
        with pytest.raises(BreakdownError) as info:
            g.run(lambda ctx: jacobi_apply(ctx, d, r, r))
        assert info.value.index == 1 and "1" in str(info.value)


# --- CG ---------------------------------------------------------------------

def test_cg_identity_one_iteration():
    b = np.random.default_rng(0).normal(size=7)
    res, x, _ = run("cg", CsrMatrix.identity(7), b, ranks=2)
    assert res.converged and res.iterations == 1
    assert np.array_equal(x, b)


def test_cg_2x2():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    oracle = np.linalg.solve(A, b)
    assert np.allclose(oracle, [1 / 11, 7 / 11], rtol=1e-15)
    res, x, _ = run("cg", CsrMatrix.from_dense(A), b, rtol=1e-12)
    assert res.converged and res.iterations <= 2
    assert np.allclose(x, oracle, rtol=1e-12, atol=0)


def test_cg_poisson_dense_oracle():
    m = generate_poisson2d(32)
    b = np.random.default_rng(1).uniform(-1, 1, m.n_rows)
    oracle = np.linalg.solve(m.to_dense(), b)
    res, x, _ = run("cg", m, b, ranks=2, threads=2, pc=True, rtol=1e-8)
    assert res.converged and res.reason == "rtol"
    assert np.linalg.norm(x - oracle) / np.linalg.norm(oracle) <= 1e-6
    assert len(res.residual_history) == res.iterations + 1
    assert np.all(np.isfinite(res.residual_history))


def test_cg_unpreconditioned_norm():
    m = generate_poisson2d(8)
    b = np.ones(m.n_rows)
    res, x, _ = run("cg", m, b, pc=True, rtol=1e-10, norm_type="unpreconditioned")
    assert res.converged
    assert res.residual_history[0] == pytest.approx(np.linalg.norm(b))
    assert np.linalg.norm(b - m.to_dense() @ x) <= 1e-10 * np.linalg.norm(b) * 1.0001


def test_cg_max_iters():
    m = generate_poisson2d(16)
    res, _, _ = run("cg", m, np.ones(m.n_rows), rtol=1e-12, max_iters=3)
    assert not res.converged and res.reason == "max_iters"
    assert res.iterations == 3 and len(res.residual_history) == 4


def test_cg_indefinite_breakdown():
    A = CsrMatrix.from_dense([[1.0, 0.0], [0.0, -1.0]])
    res, _, _ = run("cg", A, np.array([1.0, 1.0]), rtol=1e-12)
    assert not res.converged and res.reason == "breakdown"
    assert len(res.residual_history) == res.iterations + 1


def test_cg_zero_rhs():
    res, x, _ = run("cg", generate_poisson2d(4), np.zeros(16))
    assert res.converged and res.iterations == 0 and res.reason == "atol"
    assert not x.any()


def test_cg_config_independence():
    m = generate_poisson2d(12)
    b = np.random.default_rng(2).uniform(-1, 1, m.n_rows)
    runs = {c: run("cg", m, b, *c, pc=True, rtol=1e-10) for c in CONFIGS}
    iters = [r[0].iterations for r in runs.values()]
    assert max(iters) - min(iters) <= 1
    ref = runs[(1, 1)][1]
    for res, x, _ in runs.values():
        assert res.converged
        assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-8


def test_cg_history_reproducible():
    m = generate_poisson2d(10)
    b = np.random.default_rng(3).uniform(-1, 1, m.n_rows)
    h = [run("cg", m, b, 2, 2, pc=True, rtol=1e-8)[0].residual_history for _ in range(3)]
    assert h[0] == h[1] == h[2]


# --- GMRES ------------------------------------------------------------------

def test_gmres_identity():
    b = np.random.default_rng(0).normal(size=5)
    res, x, _ = run("gmres", CsrMatrix.identity(5), b)
    assert res.converged and res.iterations == 1
    assert np.allclose(x, b, rtol=1e-15)


def test_gmres_rotation_2x2():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    b = np.array([1.0, 0.0])
    oracle = np.linalg.solve(A, b)
    assert oracle.tolist() == [0.0, 1.0]
    res, x, _ = run("gmres", CsrMatrix.from_dense(A), b, ranks=2, rtol=1e-12)
    assert res.converged and res.iterations <= 2
    assert np.allclose(x, oracle, atol=1e-14)


@pytest.mark.parametrize("ranks,threads", [(1, 1), (2, 2), (4, 1)])
def test_gmres_convdiff(ranks, threads):
    m = generate_convdiff2d(16, 1.0)
    assert not np.array_equal(m.to_dense(), m.to_dense().T)
    b = np.random.default_rng(4).uniform(-1, 1, m.n_rows)
    res, x, _ = run("gmres", m, b, ranks, threads, pc=True, rtol=1e-8, restart=30)
    assert res.converged
    assert np.linalg.norm(b - m.to_dense() @ x) / np.linalg.norm(b) <= 1e-6


def test_gmres_restart_cycles_monotone_and_consistent():
    m = generate_convdiff2d(16, 1.0)
    b = np.random.default_rng(5).uniform(-1, 1, m.n_rows)
    res, _, _ = run("gmres", m, b, 2, 2, pc=True, rtol=1e-8, restart=10)
    assert res.converged and res.restart_checks
    bounds = [0] + [it for it, _, _ in res.restart_checks] + [res.iterations]
    h = res.residual_history
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        cycle = h[lo:hi + 1]
        assert all(b <= a for a, b in zip(cycle, cycle[1:]))
    for it, est, true in res.restart_checks:
        assert est == h[it]
        assert abs(est - true) <= 1e-8 * true


def test_gmres_max_iters():
    m = generate_convdiff2d(16, 1.0)
    res, _, _ = run("gmres", m, np.ones(m.n_rows), rtol=1e-12, max_iters=7, restart=5)
    assert not res.converged and res.reason == "max_iters"
    assert res.iterations == 7 and len(res.residual_history) == 8


def test_gmres_rejects_unpreconditioned_with_pc():
    m = generate_poisson2d(4)
    with pytest.raises(ValueError):
        run("gmres", m, np.ones(16), pc=True, norm_type="unpreconditioned")


# --- layering ---------------------------------------------------------------

@pytest.mark.parametrize("method", ["cg", "gmres"])
def test_solvers_only_use_kernel_and_comm_ops(method):
    m = generate_poisson2d(8)
    res, _, recs = run(method, m, np.ones(64), 2, 2, pc=True, instrument=True, rtol=1e-8)
    assert res.converged
    for rec in recs:
        assert set(rec.ops) <= SOLVER_OPS
        assert rec.violations == [] and rec.isolation_checks > 0
    # every rank issued the same operation sequence
    assert recs[0].op_sequence == recs[1].op_sequence


def test_random_nonsymmetric_gmres():
    m = random_sparse(40, 0.1, seed=8)
    dense = m.to_dense() + 10 * np.eye(40)
    A = CsrMatrix.from_dense(dense)
    b = np.random.default_rng(8).normal(size=40)
    res, x, _ = run("gmres", A, b, 4, 2, pc=True, rtol=1e-10)
    assert res.converged
    assert np.allclose(x, np.linalg.solve(dense, b), rtol=1e-7, atol=1e-9)
