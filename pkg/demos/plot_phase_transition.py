"""
Where recovery stops working
============================

A small phase-transition sweep over sparsity for a fixed number of
measurements. The CSV it prints is what ``nliht sweep`` writes.
"""

from nliht import ProblemSpec, run_sweep, sweep_csv

rows = run_sweep(ProblemSpec(N=64, M=32, k=2), ks=[2, 4, 6, 8, 10, 12], trials_per_cell=20,
                 base_seed=0, rip_trials=500, max_iterations=500)
print(sweep_csv(rows))

for r in rows:
    print(f"k={r.k:2d}  " + "#" * int(round(40 * r.success_rate)))
