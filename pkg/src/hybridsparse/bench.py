"""Benchmark driver: solve pipeline, STREAM triad, fork/join overhead and ghost-volume sweeps."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .comm import RankGroup
from .generators import generate_convdiff2d, generate_poisson2d, random_shuffle, tridiagonal
from .kernels import ThreadingPolicy, alloc_zeroed, parallel_for, seq_spmv
from .layout import build_scatter_plan, chunk_ranges, ghost_volume, partition_rows, split_dist
from .perflog import PerfLog
from .solvers import Jacobi, SolverConfig, solve
from .sparse import CsrMatrix, bandwidth, load_matrix_market, permute, rcm_order

__all__ = [
    "RunConfig",
    "RunReport",
    "TriadReport",
    "OverheadReport",
    "parse_generator",
    "load_source",
    "run_solve",
    "validate_perflog",
    "analytic_flops",
    "run_triad",
    "run_overhead",
    "run_comm_sweep",
]


def parse_generator(spec: str, seed: int = 0) -> tuple[str, CsrMatrix]:
    """Build a matrix from ``poisson2d:<k>``, ``convdiff2d:<k>[:<pe>]`` or ``tridiag:<n>``.

    A trailing ``:shuffle`` applies a random symmetric permutation drawn
    from ``seed``.
    """
    parts = spec.split(":")
    shuffle = parts[-1] == "shuffle"
    if shuffle:
        parts = parts[:-1]
    kind, args = parts[0], parts[1:]
    try:
        if kind == "poisson2d" and len(args) == 1:
            m = generate_poisson2d(int(args[0]))
        elif kind == "convdiff2d" and len(args) in (1, 2):
            m = generate_convdiff2d(int(args[0]), float(args[1]) if len(args) == 2 else 1.0)
        elif kind == "tridiag" and len(args) == 1:
            m = tridiagonal(int(args[0]))
        else:
            raise ValueError
    except ValueError:
        raise ValueError(f"bad generator spec {spec!r}") from None
    if shuffle:
        m, _ = random_shuffle(m, seed)
    return spec, m


def load_source(matrix: Optional[str] = None, gen: Optional[str] = None, seed: int = 0) -> tuple[str, CsrMatrix]:
    if (matrix is None) == (gen is None):
        raise ValueError("exactly one of a matrix file or a generator spec is required")
    if gen is not None:
        return parse_generator(gen, seed)
    return str(matrix), load_matrix_market(matrix)


@dataclass
class RunConfig:
    matrix: Optional[str] = None
    gen: Optional[str] = None
    ranks: int = 1
    threads: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    pc: str = "jacobi"
    reorder: bool = False
    rhs: str = "ones"
    log_path: Optional[str] = None
    log_format: str = "json"
    seed: int = 0
    instrument: bool = False

    def __post_init__(self):
        if self.ranks < 1 or self.threads < 1:
            raise ValueError("ranks and threads must be >= 1")
        if self.pc not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.pc!r}")
        if self.log_format not in ("json", "csv"):
            raise ValueError(f"unknown log format {self.log_format!r}")


@dataclass
class RunReport:
    log: PerfLog
    converged: bool
    reason: str
    iterations: int
    residual_history: list
    x: np.ndarray
    exit_code: int


def analytic_flops(name: str, n: int, nnz: int) -> int:
    """Flops of one global call of operation ``name``."""
    table = {
        "MatMult": 2 * nnz,
        "VecDot": 2 * n,
        "VecNorm": 2 * n,
        "VecAXPY": 2 * n,
        "VecAYPX": 2 * n,
        "VecWAXPY": 2 * n,
        "VecScale": n,
        "VecPointwiseMult": n,
        "VecPointwiseDivide": n,
        "VecCopy": 0,
        "VecSet": 0,
        "VecConjugate": 0,
        "AllReduce": 0,
    }
    return table[name]


def validate_perflog(log: PerfLog) -> list[str]:
    """Return a list of violated log invariants (empty when the log is consistent)."""
    problems = []
    n, nnz = log.environment["n"], log.environment["nnz"]
    for name, st in log.ops.items():
        want = st["calls"] * analytic_flops(name, n, nnz)
        if st["flops"] != want:
            problems.append(f"{name}: logged {st['flops']} flops, expected {want}")
    spmv = log.ops.get("MatMult", {}).get("calls", 0)
    comm = log.comm
    if comm["ghost_elements"] != comm["ghost_volume"] * spmv:
        problems.append(f"ghost elements {comm['ghost_elements']} != volume {comm['ghost_volume']} x {spmv} scatters")
    if comm["messages"] != comm["plan_messages"] * spmv:
        problems.append(f"messages {comm['messages']} != {comm['plan_messages']} x {spmv} scatters")
    return problems


def _read_vector(path: str, n: int) -> np.ndarray:
    b = np.loadtxt(path, comments=("%", "#"), ndmin=1, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"{path}: expected {n} values, got {b.size}")
    return b


def run_solve(cfg: RunConfig) -> RunReport:
    """load/generate -> optional RCM -> partition -> split -> scatter plan -> solve -> log."""
    name, A = load_source(cfg.matrix, cfg.gen, cfg.seed)
    if A.n_rows != A.n_cols:
        raise ValueError(f"{name}: square matrix required, got {A.n_rows}x{A.n_cols}")
    n = A.n_rows
    if cfg.rhs == "ones":
        b_vec = alloc_zeroed(n)
        seq_spmv(A, np.ones(n), b_vec)
        b = b_vec.values
    else:
        b = _read_vector(cfg.rhs, n)

    env = {"ranks": cfg.ranks, "threads": cfg.threads, "matrix": name, "n": n, "nnz": A.nnz,
           "bandwidth": bandwidth(A)}
    if cfg.reorder:
        p = rcm_order(A)
        A = permute(A, p)
        b = p.apply(b)
        env["bandwidth_rcm"] = bandwidth(A)

    layout = partition_rows(n, cfg.ranks)
    dm = split_dist(A, layout, cfg.threads)
    plan = build_scatter_plan(dm)
    gv = ghost_volume(dm, plan)

    with RankGroup(cfg.ranks, cfg.threads, instrument=cfg.instrument) as group:
        bd = group.vector(dm, b)
        pc = Jacobi(dm, group) if cfg.pc == "jacobi" else None
        t0 = time.perf_counter()
        res = solve(group, dm, bd, cfg.solver, pc, plan)
        wall = time.perf_counter() - t0
        recorders = group.recorders

    x = res.x.to_global()
    r = alloc_zeroed(n)
    seq_spmv(A, x, r)
    bnorm = float(np.linalg.norm(b))
    true_res = float(np.linalg.norm(b - r.values))
    if cfg.instrument:
        env["isolation_checks"] = sum(rec.isolation_checks for rec in recorders)
        env["isolation_violations"] = sum(len(rec.violations) for rec in recorders)

    solver_rec = {
        "method": cfg.solver.method,
        "pc": cfg.pc,
        "rtol": cfg.solver.rtol,
        "atol": cfg.solver.atol,
        "max_iters": cfg.solver.max_iters,
        "restart": cfg.solver.restart,
        "converged": res.converged,
        "reason": res.reason,
        "iterations": res.iterations,
        "final_residual": res.residual_history[-1],
        "true_relative_residual": true_res / bnorm if bnorm else true_res,
        "residual_history": list(res.residual_history),
        "solve_time": wall,
    }
    comm_rec = {"ghost_volume": gv.total, "plan_messages": gv.messages,
                "ghost_per_rank": list(gv.per_rank)}
    log = PerfLog.from_recorders(recorders, env, solver_rec, comm_rec)
    if cfg.log_path:
        log.write(cfg.log_path, cfg.log_format)
    return RunReport(log, res.converged, res.reason, res.iterations, list(res.residual_history), x,
                     0 if res.converged else 1)


# --- microbenchmarks -------------------------------------------------------


@dataclass
class TriadReport:
    n: int
    reps: int
    threads: int
    parallel_init: bool
    scalar: float
    bytes_per_pass: int
    best_time: float
    avg_time: float
    gbps: float
    expected: float
    checked: dict
    verified: bool

    def to_dict(self):
        return asdict(self)


def run_triad(n: int, reps: int = 10, parallel_init: bool = True, threads: int = 1, scalar: float = 3.0,
              b_value: float = 1.0, c_value: float = 2.0) -> TriadReport:
    """STREAM-style triad ``a = b + scalar * c`` over chunk-owned workers.

    With ``parallel_init`` each worker writes its own chunk of all three
    arrays first; otherwise the calling thread initializes them. GB/s are
    reported from the best repetition at 24 bytes per element.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    policy = ThreadingPolicy(threads)
    chunks = chunk_ranges(n, threads)
    a, b, c = np.empty(n), np.empty(n), np.empty(n)
    if parallel_init:
        def init(ci, lo, hi, _):
            a[lo:hi] = 0.0
            b[lo:hi] = b_value
            c[lo:hi] = c_value

        parallel_for(chunks, init, policy=policy, op="TriadInit")
    else:
        a[:] = 0.0
        b[:] = b_value
        c[:] = c_value

    def triad(ci, lo, hi, _):
        np.multiply(c[lo:hi], scalar, out=a[lo:hi])
        a[lo:hi] += b[lo:hi]

    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        parallel_for(chunks, triad, policy=policy, op="Triad")
        times.append(time.perf_counter() - t0)

    expected = b_value + scalar * c_value
    checked = {"0": float(a[0]), str(n - 1): float(a[n - 1])}
    bytes_per_pass = 24 * n
    best = min(times)
    return TriadReport(n, reps, threads, parallel_init, scalar, bytes_per_pass, best, sum(times) / reps,
                       bytes_per_pass / best / 1e9 if best > 0 else float("inf"), expected, checked,
                       all(v == expected for v in checked.values()))


@dataclass
class OverheadReport:
    threads: int
    trials: int
    regions_per_trial: int
    samples_us: list
    median_us: float
    min_us: float
    max_us: float

    def to_dict(self):
        return asdict(self)


def run_overhead(threads: int = 1, trials: int = 20, regions_per_trial: int = 100) -> OverheadReport:
    """Cost of one empty fork/join region, one sample (mean over regions) per trial."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    policy = ThreadingPolicy(threads)
    chunks = chunk_ranges(threads, threads)

    def empty(c, lo, hi, _):
        return None

    parallel_for(chunks, empty, policy=policy)  # warm up the pool
    samples = []
    for _ in range(trials):
        t0 = time.perf_counter()
        for _ in range(regions_per_trial):
            parallel_for(chunks, empty, policy=policy)
        samples.append((time.perf_counter() - t0) / regions_per_trial * 1e6)
    return OverheadReport(threads, trials, regions_per_trial, samples, statistics.median(samples), min(samples),
                          max(samples))


def run_comm_sweep(m: CsrMatrix, cores: int) -> list[dict]:
    """Ghost volume for every ``ranks x threads = cores`` split, ranks descending.

    Raises ``RuntimeError`` if the ghost volume ever grows as ranks shrink.
    """
    if cores < 1:
        raise ValueError("core budget must be >= 1")
    rows = []
    for ranks in sorted((r for r in range(1, cores + 1) if cores % r == 0), reverse=True):
        layout = partition_rows(m.n_rows, ranks)
        dm = split_dist(m, layout, cores // ranks)
        gv = ghost_volume(dm)
        sizes = [layout.size(r) for r in range(ranks)]
        rows.append({"ranks": ranks, "threads": cores // ranks, "ghost_volume": gv.total,
                     "messages": gv.messages, "max_rows": max(sizes), "min_rows": min(sizes)})
    for prev, cur in zip(rows, rows[1:]):
        if cur["ghost_volume"] > prev["ghost_volume"]:
            raise RuntimeError(
                f"ghost volume grew from {prev['ghost_volume']} at {prev['ranks']} ranks "
                f"to {cur['ghost_volume']} at {cur['ranks']} ranks"
            )
    return rows
