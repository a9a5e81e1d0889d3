import math

import numpy as np
import pytest
from scipy.optimize import linprog

from cgmpc.constants import DerivedConstants, derived_constants, with_epsilon
from cgmpc.governor import (
    ComputationGovernor,
    GovernorState,
    check_step_iv,
    kappa_max,
    lp_step_i,
    q_checks,
    reference_margins,
    reference_step,
    sigma_update,
)
from cgmpc.plant import equilibrium_pair


@pytest.fixture(scope="module")
def gov(example):
    b = example.bundle
    dc = with_epsilon(derived_constants(example.spec, example.lqr, b.beta_chi, b.phi, b.pi1, b.pi2), b)
    return ComputationGovernor(example.spec, example.qp, example.lqr, b, dc)


def test_reference_step():
    assert reference_step([-0.2744], [-0.2814], 0.0)[0] == -0.2744
    assert reference_step([-0.2744], [-0.2814], 1.0)[0] == -0.2814
    assert reference_step([-0.2744], [-0.2814], 0.5)[0] == pytest.approx(-0.2779)
    with pytest.raises(ValueError):
        reference_step([0.0], [1.0], 1.5)


def test_sigma_update(example):
    b = example.bundle
    th = np.array([0.1, 0.0, -0.2])
    assert sigma_update(th, th, 0.0, 0.0, None, b) == 0.0
    th2 = th + np.array([0.0, 0.0, 0.01])
    assert sigma_update(th2, th, 3e-4, 0.0, None, b) == pytest.approx(2.9701e-4, abs=1e-15)
    assert sigma_update(None, None, 3e-4, 0.3, 1.7e-4, b) == 1.7e-4
    assert sigma_update(None, None, 0.0, 0.3, 5.0, b) == b.sigma_max


def lp_i_oracle(qp, x, sigma_max):
    n = qp.n_eta
    theta = np.concatenate([x, [0.0]])
    Lt = qp.L @ theta
    ones = np.ones((qp.n_rows, 1))
    A = np.vstack([np.hstack([ones, qp.M]), np.hstack([ones, -qp.M])])
    b = np.concatenate([Lt + qp.upper, -Lt - qp.lower])
    res = linprog(np.concatenate([[-1.0], np.zeros(n)]), A_ub=A, b_ub=b,
                  bounds=[(0, sigma_max)] + [(None, None)] * n, method="highs")
    return -res.fun if res.status == 0 else 0.0


def test_lp_step_i(example):
    qp = example.qp
    assert lp_step_i(qp, [0.0, 0.0], 0.0015) == pytest.approx(0.0015, abs=1e-10)
    # position on its bound with zero velocity stays on the bound one step ahead
    assert lp_step_i(qp, [0.2, 0.0], 0.1) == pytest.approx(0.0, abs=1e-12)
    assert lp_step_i(qp, [0.194, 0.0], 0.1) == pytest.approx(0.002, abs=1e-10)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform([-0.21, -0.0025], [0.21, 0.0025])
        assert lp_step_i(qp, x, 0.1) == pytest.approx(lp_i_oracle(qp, x, 0.1), abs=1e-9)


def eq44(sqrt_D, dx, dv, kappa, beta_w):
    return sqrt_D + beta_w * math.hypot(dx, kappa * dv)


def test_kappa_max_closed_form_vs_bisection():
    rng = np.random.default_rng(5)
    for _ in range(200):
        sqrt_D, dx, dv = rng.uniform(0, 1), rng.uniform(0, 0.01), rng.uniform(1e-4, 0.1)
        Lam, bw = rng.uniform(0, 5), 200.0
        k = kappa_max(sqrt_D, dx, dv, Lam, bw)
        if eq44(sqrt_D, dx, dv, 0.0, bw) > Lam:
            assert k == 0.0
            continue
        lo, hi = 0.0, 1e6
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if eq44(sqrt_D, dx, dv, mid, bw) <= Lam else (lo, mid)
        assert k == pytest.approx(lo, rel=1e-9, abs=1e-12)
    assert kappa_max(0.3, 0.0, 0.0, 1.0, 200.0) == 1.0


def test_step_ii_budget_floor(gov):
    st = GovernorState(v_hat=np.array([-0.2744]), kappa=0.0, sigma=2e-4, Lambda=gov.Lambda_lower)
    out = gov.step_ii(st, np.zeros(2), np.zeros(2), [-0.2744], 0.0, 1.0, 0.002)
    assert out.Lambda == gov.Lambda_lower


def test_step_ii_budget_exhausted(gov):
    st = GovernorState(v_hat=np.array([-0.2744]), kappa=1.0, sigma=2e-4, Lambda=90.0)
    # sqrt(D) equals the reset budget with no state motion: the largest step is 0
    out = gov.step_ii(st, np.zeros(2), np.zeros(2), [-0.2814], 90.0**2, 1.0, 0.002)
    assert out.kappa == 0.0 and out.branch == "ii.e"
    out = gov.step_ii(st, np.zeros(2), np.array([0.01, 0.0]), [-0.2814], 90.0**2, 1.0, 0.002)
    assert out.kappa == 0.0 and out.branch == "ii.c"


def lp_iii_oracle(gov, sigma_dd, v_hat):
    dc = gov.derived
    bx, bu = reference_margins(gov.spec, v_hat, 0.0)
    A = [[1, 0], [-1, 0], [1, gov.sv_K], [1, 1],
         [dc.zeta1 / dc.alpha1, -gov.sqrt_dlp], [-dc.alpha2 / dc.zeta2, gov.sqrt_dlp]]
    res = linprog([-1, 0], A_ub=A, b_ub=[sigma_dd, 0, bu, bx, 0, 0], bounds=[(None, None)] * 2, method="highs")
    return -res.fun


def test_lp_step_iii_example_reference(gov):
    v = np.array([-0.2744])
    mx, mu = reference_margins(gov.spec, v, gov.bundle.sigma_min)
    cert = gov.lp_step_iii(min(0.002, mx, mu), v)
    assert cert.sigma == pytest.approx(lp_iii_oracle(gov, min(0.002, mx, mu), v), abs=1e-10)
    # regression: tightening level near the operating magnitude 3e-4
    assert cert.sigma == pytest.approx(3.0162e-4, rel=1e-3)
    assert cert.psi_check == pytest.approx(gov.sqrt_dlp * cert.x_bar, rel=1e-12)
    assert cert.p == pytest.approx(gov.lam_min_P * cert.x_bar**2, rel=1e-12)
    dc = gov.derived
    assert dc.zeta1 / dc.alpha1 * cert.sigma <= cert.psi_check * (1 + 1e-9)
    assert cert.psi_check <= dc.alpha2 / dc.zeta2 * cert.sigma


def test_lp_step_iii_symmetric_box_midpoint(gov):
    cert = gov.lp_step_iii(0.001, np.array([0.0]))
    assert cert is not None and cert.sigma > 0
    assert cert.sigma == pytest.approx(lp_iii_oracle(gov, 0.001, np.array([0.0])), abs=1e-10)


def test_lp_step_iii_huge_ratio_forces_zero(example):
    b = example.bundle
    dc = DerivedConstants(alpha1=1e-12, zeta1=0.6, alpha2=0.01, zeta2=1e-5, d=1.27, eps_lower=1e-6)
    g = ComputationGovernor(example.spec, example.qp, example.lqr, b, dc)
    cert = g.lp_step_iii(0.001, np.array([0.0]))
    assert cert is None or cert.sigma < 1e-9


def test_lp_step_iii_rejects_zero_budget(gov):
    assert gov.lp_step_iii(0.0, np.array([-0.2744])) is None


def test_check_step_iv(gov):
    ok, lhs, rhs = check_step_iv(0.0, 0.0, [-0.2744], [-0.2744], 1e-6, gov.derived, gov.bundle)
    assert ok and lhs == 0.0 and rhs > 0
    ok, _, _ = check_step_iv(0.0, 0.0, [-0.2], [-0.2744], 1e-8, gov.derived, gov.bundle)
    assert not ok


def test_q_checks(gov):
    q1, q2, _ = q_checks(0.0, 1e-5, 1e-10, 1e-5, gov.derived, gov.bundle, gov.lam_min_P, gov.sv_K)
    assert q1 and q2
    _, q2, _ = q_checks(0.0, gov.bundle.sigma_min, 1e-10, 0.0, gov.derived, gov.bundle, gov.lam_min_P, gov.sv_K)
    assert not q2
    *_, q3 = q_checks(0.0, 0.0, 0.0, 0.0, gov.derived, gov.bundle, gov.lam_min_P, gov.sv_K)
    assert q3


def test_initial_state(gov):
    st = gov.initial_state(np.array([0.194, 0.0]), [-0.2744])
    x, _ = equilibrium_pair(gov.spec.basis, st.v_hat)
    np.testing.assert_allclose(x, [0.194, 0.0], atol=1e-15)
    assert st.kappa == 0 and st.sigma == pytest.approx(gov.bundle.omega * gov.bundle.sigma_min)
    assert st.Lambda == gov.bundle.lambda_upper
    st = gov.initial_state(np.array([0.194, 0.001]), [-0.2744])
    assert st.v_hat[0] == -0.2744


def test_tick_idle_is_noop(gov):
    st = GovernorState(v_hat=np.array([-0.2744]), kappa=1.0, sigma=2e-4, Lambda=90.0)
    x = np.array([0.194, 0.0])
    new, cert = gov.tick(st, x, x, [-0.2744], 0.0, 0.0)
    assert new.kappa == 1.0 and new.v_hat[0] == -0.2744
    assert new.sigma == pytest.approx(0.99 * 2e-4)
    assert cert["branch"] == "idle"


# -- properties of the logged example run ------------------------------------------


def test_early_exits_keep_reference(example_logs):
    recs = example_logs["a1"]
    for prev, cur in zip(recs, recs[1:]):
        if cur.kappa == 0:
            np.testing.assert_array_equal(cur.v_hat, prev.v_hat)
            assert cur.branch in {"ii.c", "ii.e", "lp-i", "lp-iii", "iv"}
        assert 0.0 <= cur.kappa <= 1.0
        assert 0.0 <= cur.sigma <= 0.1


def test_budget_monotone_while_rejecting(example_logs, gov):
    recs = example_logs["a1"]
    for prev, cur in zip(recs, recs[1:]):
        if prev.kappa == 0 and cur.kappa == 0:
            assert cur.Lambda <= prev.Lambda
            assert cur.Lambda >= gov.Lambda_lower


def test_small_step_branch_never_taken(example_logs):
    assert all(r.branch != "accept-eps" for r in example_logs["a1"])


def test_reference_change_kappa_regression(example_logs):
    # the tick that first sees v = -0.2814 produces the state logged at t = 25
    cert = example_logs["a1"][25].cert
    assert cert["Lambda"] == 90.0
    sqrt_D = math.sqrt(cert["D_prev"])
    dx = (cert["ii_c_lhs"] - sqrt_D) / 200.0
    dv = abs(-0.2814 - example_logs["a1"][24].v_hat[0])
    lo, hi = 0.0, 1e6
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if eq44(sqrt_D, dx, dv, mid, 200.0) <= 90.0 else (lo, mid)
    assert cert["kappa_max"] == pytest.approx(lo, rel=1e-9)
    # regression: the budget admits the full step, step iv then rejects it
    assert cert["kappa_max"] == pytest.approx(64.2857, rel=1e-5)
    assert cert["kappa_candidate"] == 1.0 and cert["branch"] == "iv"
