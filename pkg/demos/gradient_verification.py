"""Finite-difference check of every analytic loss gradient.

Same machinery as ``ssrs gradcheck`` but looped over a handful of seeds so
you can see the error stay flat instead of trusting a single draw.
"""

import time

from ssrs.cli import gradcheck_report

SEEDS = range(6)

print(f"{'seed':>4}  {'reward match':>12}  {'ordering':>12}  {'consistency':>12}")
t0 = time.perf_counter()
worst = 0.0
for seed in SEEDS:
    errs = gradcheck_report(seed)
    worst = max(worst, *errs.values())
    print(f"{seed:4d}  {errs['L_r']:12.3e}  {errs['L_QV']:12.3e}  "
          f"{errs['L_s']:12.3e}")

print(f"\nworst relative error over {len(list(SEEDS))} seeds: {worst:.3e}  "
      f"({time.perf_counter() - t0:.1f}s)")
print("anything around 1e-6 means the backward pass matches the numerics;"
      " 1e-2 or worse would mean a broken gradient.")
