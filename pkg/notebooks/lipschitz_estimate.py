"""Sampling the Lipschitz and contraction constants.

The governor is configured with hand-picked constants. This script samples
them around the operating region and compares. The estimate is advisory:
sampled maxima are lower bounds on the true constants, and a large gap in
either direction is worth a look before trusting the certificates.
"""

from cgmpc.config import RunConfig
from cgmpc.constants import estimate_lipschitz

cfg = RunConfig.default()
prob = cfg.build()
est = estimate_lipschitz(prob.spec, prob.qp, prob.bundle, cfg.sampler(samples=200, seed=0))
print(est.to_text())

b = prob.bundle
for name, configured in (("beta_chi", b.beta_chi), ("phi", b.phi), ("beta_w", b.beta_w)):
    print(f"{name:9s} configured {configured:<10g} sampled raw {est.raw[name]:.4g}")
# gamma is a worst observed contraction ratio, not a sampled maximum
print(f"gamma     configured {b.gamma:<10g} sampled {est.gamma:.6g}")
