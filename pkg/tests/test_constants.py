import math

import numpy as np
import pytest

from cgmpc.constants import (
    ConfigurationError,
    ConstantsBundle,
    DerivedConstants,
    EstimationError,
    SamplerConfig,
    derived_constants,
    epsilon_lower,
    estimate_lipschitz,
    verify_assumptions,
)

from conftest import random_instance


def test_example_derived_constants(example):
    b = example.bundle
    dc = derived_constants(example.spec, example.lqr, b.beta_chi, b.phi, b.pi1, b.pi2)
    assert dc.alpha1 == pytest.approx(1 - math.sqrt(8 / 9), abs=1e-12)
    assert dc.alpha1 == pytest.approx(0.057191, abs=1e-6)
    assert dc.zeta1 == pytest.approx(0.6, abs=1e-12)
    assert dc.alpha2 == pytest.approx(1 - (0.99 + 1e-6 * 0.01 * 2), abs=1e-15)
    assert dc.zeta2 == pytest.approx(1e-6 * (0.3 + 0.01) / math.sqrt(1e-3), rel=1e-4)
    lam_max_P = np.linalg.eigvalsh(example.lqr.P).max()
    assert dc.d == pytest.approx(3 / lam_max_P + 1, rel=1e-12)


def test_derived_constants_pure(example):
    b = example.bundle
    a = derived_constants(example.spec, example.lqr, b.beta_chi, b.phi, b.pi1, b.pi2)
    c = derived_constants(example.spec, example.lqr, b.beta_chi, b.phi, b.pi1, b.pi2)
    assert a == c


def test_derived_constants_errors(example):
    with pytest.raises(ConfigurationError):
        derived_constants(example.spec, example.lqr, 0.5, 1.0, 0.99, 1e-6)
    with pytest.raises(ConfigurationError):
        derived_constants(example.spec, example.lqr, 3.0, 1.0, 1.5, 1e-6)


def test_epsilon_lower_substitution():
    dc = DerivedConstants(alpha1=0.5, zeta1=0.6, alpha2=0.01, zeta2=1e-5, d=1.0)
    b = ConstantsBundle()
    # zeta1 / (alpha1 sqrt d) = 2 zeta1
    assert epsilon_lower(dc, b) == pytest.approx(b.omega * b.sigma_min * 0.6 / 3.0)
    limit = DerivedConstants(alpha1=1.0, zeta1=0.6, alpha2=0.01, zeta2=1e-5, d=1.0)
    assert epsilon_lower(limit, b, strict=False) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ConfigurationError):
        epsilon_lower(limit, b)


def test_example_epsilon_regression(example):
    b = example.bundle
    dc = derived_constants(example.spec, example.lqr, b.beta_chi, b.phi, b.pi1, b.pi2)
    assert epsilon_lower(dc, b) == pytest.approx(9.69e-7, rel=1e-3)


def samples():
    return [np.array([v]) for v in np.linspace(-0.2814, -0.2744, 11)]


def test_verify_example_passes(example):
    rep = verify_assumptions(example.spec, example.lqr, example.qp, example.bundle, samples())
    assert rep.passed, rep.to_text()
    soft = [c for c in rep.failures()]
    assert [c.name for c in soft] == ["sigma_max keeps the tightened box nonempty"]
    assert set(rep.to_record()) >= {"A1 compact, origin and equilibria interior", "A7 constraint sets are hyper-rectangles"}


def test_verify_detects_large_pi2(example):
    rep = verify_assumptions(example.spec, example.lqr, example.qp, example.bundle.replace(pi2=0.5, pi1=0.6), samples())
    a6 = [c for c in rep.checks if c.name.startswith("A6")][0]
    assert not a6.passed and "alpha2" in a6.witness


def test_verify_detects_boundary_reference(example):
    # v on the boundary: x_v position = 0.2
    v_edge = np.array([-0.2 * math.sqrt(2)])
    rep = verify_assumptions(example.spec, example.lqr, example.qp, example.bundle, [v_edge])
    a5 = [c for c in rep.checks if c.name.startswith("A5")][0]
    assert not a5.passed and not rep.passed


def test_estimator_repeatable(example):
    cfg = SamplerConfig(v_lower=-0.29, v_upper=-0.26, samples=30, seed=3, gamma_solves=2, gamma_max_iter=500)
    a = estimate_lipschitz(example.spec, example.qp, example.bundle, cfg)
    b = estimate_lipschitz(example.spec, example.qp, example.bundle, cfg)
    assert a == b
    assert a.pairs + a.rejected == 30
    assert a.beta_chi == pytest.approx(1.5 * a.raw["beta_chi"])
    assert 0 < a.gamma < 1


def test_estimator_unconstrained_phi_zero():
    spec, _, qp = random_instance(np.random.default_rng(2), bound_scale=1e4)
    cfg = SamplerConfig(v_lower=-0.1, v_upper=0.1, samples=20, seed=0, x_scale=1e-4, gamma_solves=1,
                        gamma_max_iter=200)
    est = estimate_lipschitz(spec, qp, ConstantsBundle(), cfg)
    assert est.phi <= 1e-6


def test_estimator_insufficient_samples(example):
    cfg = SamplerConfig(v_lower=-0.29, v_upper=-0.26, samples=3, seed=0, min_feasible=10)
    with pytest.raises(EstimationError):
        estimate_lipschitz(example.spec, example.qp, example.bundle, cfg)


def test_estimated_constants_consistent_with_recursion(example, example_logs):
    """With the estimated beta_chi the first recursion still holds along the run."""
    from cgmpc.qp_oracle import optimal_value

    cfg = SamplerConfig(v_lower=-0.2814, v_upper=-0.2744, samples=60, seed=0, gamma_solves=1, gamma_max_iter=300)
    est = estimate_lipschitz(example.spec, example.qp, example.bundle, cfg)
    b = example.bundle
    dc = derived_constants(example.spec, example.lqr, max(est.beta_chi, 1.01), max(est.phi, 1e-9), b.pi1, b.pi2)
    recs = example_logs["a1"][:60]
    for cur, nxt in zip(recs, recs[1:]):
        if nxt.kappa != 0:
            continue
        th0 = example.spec.theta(cur.x, cur.v_hat)
        th1 = example.spec.theta(nxt.x, cur.v_hat)
        psi0 = optimal_value(example.qp, th0)[1]
        psi1 = optimal_value(example.qp, th1)[1]
        assert psi1 <= (1 - dc.alpha1) * psi0 + dc.zeta1 * cur.sigma + 1e-9
