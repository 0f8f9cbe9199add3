"""
Solver timings across resolutions
=================================

Decode synthetic 1/f images at growing sizes. Multigrid and the network
scale close to linearly. DST timings also depend on how 2(n+1) factors,
so a size whose n+1 is prime (257) can be slower than the next doubling.
"""

from lapfield.analytics import bench_csv, benchmark_solvers
from lapfield.wcnn import default_kernels

results = benchmark_solvers([128, 256, 512], ["dst", "multigrid", "wcnn"], reps=3, kernels=default_kernels())
print(bench_csv(results))

by = {}
for r in results:
    by.setdefault(r.solver, []).append(r.median_seconds)
for name, t in by.items():
    print(name, "growth per doubling:", ", ".join(f"{b / a:.2f}" for a, b in zip(t, t[1:])))
