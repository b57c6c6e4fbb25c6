"""
Benchmark driver, performance logs and microbenchmarks
=======================================================

The same functions back the ``hybridsparse-bench`` command line tool.
"""

from hybridsparse import SolverConfig
from hybridsparse.bench import RunConfig, run_comm_sweep, run_overhead, run_solve, run_triad, validate_perflog
from hybridsparse.generators import generate_poisson2d

# Full pipeline: generate, reorder, partition, split, plan, solve, log
rep = run_solve(RunConfig(gen="poisson2d:32:shuffle", reorder=True, ranks=2, threads=2,
                          solver=SolverConfig("cg", rtol=1e-8)))
env = rep.log.environment
print(f"bandwidth {env['bandwidth']} -> {env['bandwidth_rcm']}; {rep.reason} after {rep.iterations} iterations;"
      f" exit code {rep.exit_code}")
for name, st in rep.log.ops.items():
    print(f"  {name:<20} calls={st['calls']:<5} flops={st['flops']}")
print("log consistency problems:", validate_perflog(rep.log))
print(rep.log.to_csv().splitlines()[:4])

# Fewer ranks with more threads each means fewer ghost values to exchange
for row in run_comm_sweep(generate_poisson2d(32), 8):
    print(row)

# Timings depend on the machine and are printed, not checked
tri = run_triad(2_000_000, reps=5, threads=2)
print(f"triad: {tri.gbps:.2f} GB/s, values verified: {tri.verified}")
ovh = run_overhead(threads=2, trials=10)
print(f"empty parallel region: median {ovh.median_us:.1f} us")
