"""One governor tick, step by step.

Replays the tick that first sees the reference change and prints every
intermediate quantity it logged: the tightening budget, the proposed step
fraction, the certified ball from the tightening LP and the final acceptance
test. Then lists which branch every tick of the run ended in.
"""

from collections import Counter

from cgmpc.config import RunConfig
from cgmpc.simulation import Scenario, run_closed_loop

cfg = RunConfig.default()
prob = cfg.build()
recs = run_closed_loop(Scenario(prob.spec, prob.lqr, prob.bundle, cfg.x0, cfg.segments, cfg.steps))

# record t carries the cert of the tick run at t - 1
first = next(r for r in recs if r.t > 0 and r.cert.get("kappa_max", 0) > 0 and r.v[0] != recs[0].v[0])
print(f"tick ending at t={first.t}, branch {first.cert['branch']!r}")
for key in ("D_prev", "psi_hat", "sigma_t", "sigma_prime", "kappa_max", "Lambda", "kappa_candidate",
            "sigma_dd", "lp_sigma", "x_bar", "p", "psi_check", "iv_lhs", "iv_rhs"):
    val = first.cert.get(key)
    if val is not None:
        print(f"  {key:16s} {val!r}")

first_accept = next(r for r in recs if r.cert.get("branch") == "accept")
print(f"\nfirst accepted tick ending at t={first_accept.t}: kappa={first_accept.kappa}")
print(f"  iv: {first_accept.cert['iv_lhs']:.4e} <= {first_accept.cert['iv_rhs']:.4e}")

print("\nbranch counts:", dict(Counter(r.branch for r in recs)))
