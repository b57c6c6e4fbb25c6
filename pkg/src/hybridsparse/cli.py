"""Command-line benchmark driver.

    hybridsparse-bench solve --gen poisson2d:32 --ranks 2 --threads 2 --solver cg --pc jacobi
    hybridsparse-bench triad --n 1000000 --threads 4
    hybridsparse-bench overhead --threads 4 --trials 50
    hybridsparse-bench comm-sweep --gen poisson2d:16 --cores 4
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import RunConfig, load_source, run_comm_sweep, run_overhead, run_solve, run_triad
from .solvers import SolverConfig


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market coordinate file")
    src.add_argument("--gen", metavar="SPEC", help="poisson2d:<k> | convdiff2d:<k>:<pe> | tridiag:<n> [:shuffle]")
    p.add_argument("--seed", type=int, default=0)


def _add_log(p):
    p.add_argument("--log", metavar="PATH")
    p.add_argument("--log-format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridsparse-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve A x = b and log per-operation statistics")
    _add_source(s)
    s.add_argument("--ranks", type=int, default=1)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--solver", choices=("cg", "gmres"), default="cg")
    s.add_argument("--pc", choices=("none", "jacobi"), default="jacobi")
    s.add_argument("--rtol", type=float, default=1e-5)
    s.add_argument("--atol", type=float, default=1e-50)
    s.add_argument("--max-iters", type=int, default=10_000)
    s.add_argument("--restart", type=int, default=30)
    s.add_argument("--norm", choices=("preconditioned", "unpreconditioned"), default="preconditioned")
    s.add_argument("--rcm", action="store_true", help="reorder with reverse Cuthill-McKee first")
    s.add_argument("--rhs", default="ones", help="'ones' for b = A*ones, or a text file with one value per line")
    s.add_argument("--instrument", action="store_true", help="check chunk isolation of every kernel")
    _add_log(s)

    t = sub.add_parser("triad", help="STREAM triad bandwidth")
    t.add_argument("--n", type=int, default=10_000_000)
    t.add_argument("--reps", type=int, default=10)
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--scalar", type=float, default=3.0)
    t.add_argument("--serial-init", action="store_true", help="initialize arrays on the calling thread")
    _add_log(t)

    o = sub.add_parser("overhead", help="fork/join cost of an empty parallel region")
    o.add_argument("--threads", type=int, default=1)
    o.add_argument("--trials", type=int, default=20)
    _add_log(o)

    c = sub.add_parser("comm-sweep", help="ghost volume for every ranks x threads split of a core budget")
    _add_source(c)
    c.add_argument("--cores", type=int, required=True)
    _add_log(c)
    return parser


def _emit(obj, args):
    if args.log:
        with open(args.log, "w") as fh:
            if args.log_format == "json":
                json.dump(obj, fh, indent=2)
            else:
                rows = obj if isinstance(obj, list) else [obj]
                keys = list(rows[0])
                fh.write(",".join(keys) + "\n")
                for row in rows:
                    fh.write(",".join(str(row[k]) for k in keys) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "solve":
        cfg = RunConfig(
            matrix=args.matrix, gen=args.gen, ranks=args.ranks, threads=args.threads,
            solver=SolverConfig(args.solver, args.rtol, args.atol, args.max_iters, args.restart, args.norm),
            pc=args.pc, reorder=args.rcm, rhs=args.rhs, log_path=args.log, log_format=args.log_format,
            seed=args.seed, instrument=args.instrument,
        )
        try:
            rep = run_solve(cfg)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        env, sol = rep.log.environment, rep.log.solver
        print(f"matrix {env['matrix']}: n={env['n']} nnz={env['nnz']} bandwidth={env['bandwidth']}"
              + (f" -> {env['bandwidth_rcm']} after RCM" if "bandwidth_rcm" in env else ""))
        print(f"{sol['method']}+{sol['pc']} on {env['ranks']}x{env['threads']}: {rep.reason} after "
              f"{rep.iterations} iterations, residual {sol['final_residual']:.3e}, "
              f"true relative residual {sol['true_relative_residual']:.3e}")
        for name, st in rep.log.ops.items():
            print(f"  {name:<20} calls={st['calls']:<6} time={st['time']:.4f}s flops={st['flops']}")
        print(f"  ghost volume {rep.log.comm['ghost_volume']}, messages {rep.log.comm['messages']}, "
              f"reductions {rep.log.comm['reductions']}")
        return rep.exit_code

    if args.command == "triad":
        rep = run_triad(args.n, args.reps, not args.serial_init, args.threads, args.scalar)
        print(f"triad n={rep.n} threads={rep.threads} parallel_init={rep.parallel_init}: "
              f"{rep.gbps:.2f} GB/s (best {rep.best_time:.4f}s), verified={rep.verified}")
        _emit(rep.to_dict(), args)
        return 0 if rep.verified else 1

    if args.command == "overhead":
        rep = run_overhead(args.threads, args.trials)
        print(f"fork/join threads={rep.threads}: median {rep.median_us:.2f} us "
              f"(min {rep.min_us:.2f}, max {rep.max_us:.2f}) over {rep.trials} trials")
        _emit(rep.to_dict(), args)
        return 0

    name, m = load_source(args.matrix, args.gen, args.seed)
    rows = run_comm_sweep(m, args.cores)
    print(f"{name}: n={m.n_rows} nnz={m.nnz}, core budget {args.cores}")
    print(f"{'ranks':>6} {'threads':>8} {'ghosts':>8} {'msgs':>6} {'rows/rank':>12}")
    for r in rows:
        print(f"{r['ranks']:>6} {r['threads']:>8} {r['ghost_volume']:>8} {r['messages']:>6} "
              f"{r['min_rows']:>5}-{r['max_rows']:<6}")
    _emit(rows, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
