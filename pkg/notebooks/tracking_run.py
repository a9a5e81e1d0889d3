"""Tracking run on the two-state example plant.

Runs the governed ADMM controller and the two exact-solve baselines over the
shipped schedule (reference steps from -0.2744 to -0.2814 at t = 25), then
prints iteration statistics and how close each case comes to the position
bound. Pass a directory as the first argument to also write CSV logs.
"""

import sys
from pathlib import Path

import numpy as np

from cgmpc.config import RunConfig
from cgmpc.simulation import compare_cases, emit_csv, run_all, summary_text

cfg = RunConfig.default()
prob = cfg.build()
logs = run_all(prob.spec, prob.lqr, prob.bundle, cfg.x0, cfg.segments, cfg.steps)

print(summary_text(compare_cases(logs)))

# margin to |x_1| = 0.2; the desired-reference case rides the bound
for case, recs in logs.items():
    margin = min(0.2 - abs(r.x[0]) for r in recs)
    print(f"{case:15s} min margin to position bound: {margin:.5f}")

a1 = logs["a1"]
moves = [(r.t, float(r.v_hat[0])) for r, prev in zip(a1[1:], a1) if r.v_hat[0] != prev.v_hat[0]]
print(f"\nreference moves ({len(moves)}):")
for t, v in moves:
    print(f"  t={t:3d}  v_hat={v:.6f}")

xa = np.array([r.x for r in a1])
xc = np.array([r.x for r in logs["exact-governed"]])
print(f"\nsup-norm gap to exact solves on the same reference: {np.abs(xa - xc).max():.2e}")

if len(sys.argv) > 1:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    for case, recs in logs.items():
        emit_csv(recs, out / f"{case}.csv", deterministic=True)
    print(f"wrote CSV logs to {out}")
