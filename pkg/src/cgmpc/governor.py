"""Computation governor: reference modification, tightening update and terminal-set certificate.

At each time instant the governor picks the modified reference ``v_hat`` for
the next instant as ``v_hat + kappa (v - v_hat)``. ``kappa`` is the largest
step whose predicted warm-start suboptimality stays within the budget
``Lambda``. The step is accepted only if a terminal set for the new reference
can be certified; otherwise ``kappa = 0`` and the tightening level decays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .condense import CondensedQp, OcpSpec
from .constants import ConstantsBundle, DerivedConstants, largest_sv
from .lp import LinearProgram, LPError, solve_lp
from .plant import LqrSolution, equilibrium_pair, equilibrium_reference


@dataclass(frozen=True)
class GovernorState:
    v_hat: np.ndarray
    kappa: float
    sigma: float
    Lambda: float
    psi_check: float = float("nan")
    p: float = float("nan")
    x_bar: float = float("nan")
    branch: str = "init"


@dataclass(frozen=True)
class RoaCertificate:
    sigma: float
    x_bar: float
    p: float
    psi_check: float


@dataclass
class StepTwoResult:
    kappa: float
    Lambda: float
    sigma_dd: float = float("nan")
    kappa_max: float = float("nan")
    branch: str = ""
    v_hat: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def reference_step(v_hat_prev, v, kappa: float) -> np.ndarray:
    """Convex combination ``v_hat_prev + kappa (v - v_hat_prev)``."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    v_hat_prev = np.atleast_1d(np.asarray(v_hat_prev, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if kappa == 1.0:
        return v.copy()
    return kappa * (v - v_hat_prev) + v_hat_prev


def sigma_update(theta, theta_prev, sigma_prev, kappa, sigma_lp, bundle: ConstantsBundle) -> float:
    """Next tightening level.

    An accepted step (``kappa > 0``) takes the certified level ``sigma_lp``;
    otherwise ``pi1 sigma_prev + pi2 |theta - theta_prev|``. Clamped to
    ``[0, sigma_max]``.
    """
    if kappa > 0:
        sigma = sigma_lp
    else:
        dtheta = np.linalg.norm(np.asarray(theta, dtype=float) - np.asarray(theta_prev, dtype=float))
        sigma = bundle.pi1 * sigma_prev + bundle.pi2 * dtheta
    return float(min(max(sigma, 0.0), bundle.sigma_max))


def lp_step_i(qp: CondensedQp, x_next, sigma_max: float) -> float:
    """Largest tightening for which the OCP at ``x_next`` is still feasible.

    Returns 0 when even the untightened problem is infeasible.
    """
    n_eta, rows = qp.n_eta, qp.n_rows
    theta = np.concatenate([np.asarray(x_next, dtype=float), np.zeros(qp.L.shape[1] - len(x_next))])
    Ltheta = qp.L @ theta
    ones = np.ones((rows, 1))
    A = np.vstack([
        np.hstack([[[1.0]], np.zeros((1, n_eta))]),
        np.hstack([[[-1.0]], np.zeros((1, n_eta))]),
        np.hstack([ones, qp.M]),
        np.hstack([ones, -qp.M]),
    ])
    b = np.concatenate([[sigma_max, 0.0], Ltheta + qp.upper, -Ltheta - qp.lower])
    c = np.zeros(1 + n_eta)
    c[0] = 1.0
    try:
        sol = solve_lp(LinearProgram(c, A, b))
    except LPError:
        return 0.0
    return float(max(sol[0], 0.0))


def kappa_max(sqrt_D: float, dx_norm: float, dv_norm: float, Lambda: float, beta_w: float) -> float:
    """Largest ``kappa`` with ``sqrt(D) + beta_w |(dx, kappa dv)| <= Lambda``.

    Returns 1 when the reference does not move (any step is free).
    """
    if dv_norm == 0.0:
        return 1.0
    budget = (Lambda - sqrt_D) / beta_w
    if budget <= 0:
        return 0.0
    return math.sqrt(max(0.0, budget**2 - dx_norm**2)) / dv_norm


def reference_margins(spec: OcpSpec, v_hat, shrink: float, rectangular: bool = True) -> tuple[float, float]:
    """Distances ``(state, input)`` from the equilibrium of ``v_hat`` to bounds shrunk by ``shrink``.

    ``rectangular=False`` uses Euclidean norms of the bound offsets, the
    generalization for non-box constraint sets.
    """
    x_v, u_v = equilibrium_pair(spec.basis, v_hat)
    cx, du = spec.C @ x_v, spec.D @ u_v
    if rectangular:
        mx = min(np.min(spec.x_upper - shrink - cx), np.min(cx - (spec.x_lower + shrink)))
        mu = min(np.min(spec.u_upper - shrink - du), np.min(du - (spec.u_lower + shrink)))
    else:
        mx = min(np.linalg.norm(spec.x_upper - shrink - cx), np.linalg.norm(cx - (spec.x_lower + shrink)))
        mu = min(np.linalg.norm(spec.u_upper - shrink - du), np.linalg.norm(du - (spec.u_lower + shrink)))
    return float(mx), float(mu)


def q_checks(psi_hat, sigma, p, sigma_next, derived: DerivedConstants, bundle: ConstantsBundle, lam_min_P, sv_K):
    """Qualifications of the quiescent-window construction ``(Q1, Q2, Q3)``."""
    eps = derived.eps_lower
    b = bundle.beta_chi
    q1 = psi_hat <= min(b * eps, (math.sqrt(derived.d) - 1.0) * b * eps)
    q2 = sigma < bundle.sigma_min
    room = bundle.sigma_min - sigma_next
    if math.isfinite(p):
        q3 = math.sqrt(p / lam_min_P) <= room and math.sqrt(sv_K * p / lam_min_P) <= room
    else:
        q3 = False
    return bool(q1), bool(q2), bool(q3)


def check_step_iv(psi_hat, sigma, v_hat_next, v_hat, p_next, derived: DerivedConstants, bundle: ConstantsBundle):
    """Accept iff ``psi_hat + beta_chi |dv_hat| + zeta1 sigma <= sqrt(d p_next)``.

    Returns ``(accept, lhs, rhs)``.
    """
    dv = float(np.linalg.norm(np.asarray(v_hat_next, dtype=float) - np.asarray(v_hat, dtype=float)))
    lhs = psi_hat + bundle.beta_chi * dv + derived.zeta1 * sigma
    rhs = math.sqrt(derived.d * p_next) if p_next > 0 else 0.0
    return bool(lhs <= rhs), float(lhs), float(rhs)


class ComputationGovernor:
    """Online reference governor for one control loop.

    Parameters
    ----------
    spec, qp : OcpSpec, CondensedQp
        Problem data; ``qp`` must be ``condense(spec)``.
    lqr : LqrSolution
        Supplies ``P`` and ``K`` for the terminal-set construction.
    bundle : ConstantsBundle
    derived : DerivedConstants
        Must carry ``eps_lower``.
    """

    def __init__(self, spec: OcpSpec, qp: CondensedQp, lqr: LqrSolution, bundle: ConstantsBundle,
                 derived: DerivedConstants):
        if not math.isfinite(derived.eps_lower):
            raise ValueError("derived constants must include eps_lower")
        self.spec = spec
        self.qp = qp
        self.lqr = lqr
        self.bundle = bundle
        self.derived = derived
        self.lam_min_P = float(np.linalg.eigvalsh(lqr.P).min())
        self.sv_K = largest_sv(lqr.K)
        self.sqrt_dlp = math.sqrt(derived.d * self.lam_min_P)
        self.Lambda_lower = derived.eps_lower if bundle.lambda_lower is None else bundle.lambda_lower

    # -- individual steps -----------------------------------------------------

    def step_ii(self, state: GovernorState, x, x_next, v_next, D_prev, psi_hat, sigma_prime) -> StepTwoResult:
        b, dc = self.bundle, self.derived
        v_next = np.atleast_1d(np.asarray(v_next, dtype=float))
        if state.kappa == 0:
            Lambda = max(self.Lambda_lower, b.decay * state.Lambda)
        else:
            Lambda = b.lambda_upper
        dv = float(np.linalg.norm(v_next - state.v_hat))
        dx = float(np.linalg.norm(np.asarray(x_next) - np.asarray(x)))
        sqrt_D = math.sqrt(max(D_prev, 0.0))
        out = StepTwoResult(kappa=0.0, Lambda=Lambda)
        out.info["ii_c_lhs"] = sqrt_D + b.beta_w * dx

        q1, q2, _ = q_checks(psi_hat, state.sigma, state.p, state.sigma, dc, b, self.lam_min_P, self.sv_K)
        if Lambda == self.Lambda_lower and q1 and q2 and dv > 0:
            out.kappa = min(1.0, dc.eps_lower / dv)
            out.branch = "ii.b"
        else:
            if sqrt_D + b.beta_w * dx > Lambda:
                out.branch = "ii.c"
                return out
            km = kappa_max(sqrt_D, dx, dv, Lambda, b.beta_w)
            out.kappa_max = km
            kappa = min(1.0, km)
            if dv > 0 and kappa < dc.eps_lower / dv:
                out.branch = "ii.e"
                return out
            out.kappa = kappa
        out.v_hat = reference_step(state.v_hat, v_next, out.kappa)
        mx, mu = reference_margins(self.spec, out.v_hat, b.sigma_min)
        out.sigma_dd = min(sigma_prime, mx, mu)
        return out

    def lp_step_iii(self, sigma_dd: float, v_hat_next) -> RoaCertificate | None:
        """Largest tightening with a compatible terminal-set radius, or ``None``."""
        if not sigma_dd > 0:
            return None
        dc = self.derived
        bx, bu = reference_margins(self.spec, v_hat_next, 0.0)
        A = np.array([
            [1.0, 0.0],
            [-1.0, 0.0],
            [1.0, self.sv_K],
            [1.0, 1.0],
            [dc.zeta1 / dc.alpha1, -self.sqrt_dlp],
            [-dc.alpha2 / dc.zeta2, self.sqrt_dlp],
        ])
        b = np.array([sigma_dd, 0.0, bu, bx, 0.0, 0.0])
        try:
            sigma, x_bar = solve_lp(LinearProgram([1.0, 0.0], A, b))
        except LPError:
            return None
        if not sigma > 0:
            return None
        p = self.lam_min_P * x_bar**2
        return RoaCertificate(sigma=float(sigma), x_bar=float(x_bar), p=float(p), psi_check=math.sqrt(dc.d * p))

    # -- composed tick ----------------------------------------------------------

    def initial_state(self, x0, v0) -> GovernorState:
        """``v_hat`` makes ``x0`` an equilibrium when possible, else ``v0``."""
        v_hat = equilibrium_reference(self.spec.basis, x0)
        if v_hat is None:
            v_hat = np.atleast_1d(np.asarray(v0, dtype=float)).copy()
        return GovernorState(
            v_hat=v_hat, kappa=0.0, sigma=self.bundle.omega * self.bundle.sigma_min,
            Lambda=self.bundle.lambda_upper,
        )

    def tick(self, state: GovernorState, x, x_next, v_next, D_prev: float, psi_hat: float):
        """Decide ``(v_hat, kappa, sigma, Lambda)`` for the next instant.

        Returns the new state and a certificate record with every quantity
        compared along the way.
        """
        b, dc = self.bundle, self.derived
        v_next = np.atleast_1d(np.asarray(v_next, dtype=float))
        x = np.asarray(x, dtype=float)
        x_next = np.asarray(x_next, dtype=float)
        theta = np.concatenate([x, state.v_hat])
        theta_next_hold = np.concatenate([x_next, state.v_hat])
        cert = {"D_prev": D_prev, "psi_hat": psi_hat, "sigma_t": state.sigma}

        def hold(branch, Lambda):
            sigma = sigma_update(theta_next_hold, theta, state.sigma, 0.0, None, b)
            kappa = 1.0 if branch == "idle" else 0.0
            cert.update(branch=branch, kappa=kappa, Lambda=Lambda, sigma=sigma)
            new = replace(state, kappa=kappa, sigma=sigma, Lambda=Lambda, branch=branch)
            return new, cert

        if state.kappa == 1.0 and np.array_equal(v_next, state.v_hat):
            return hold("idle", state.Lambda)

        sigma_prime = lp_step_i(self.qp, x_next, b.sigma_max)
        cert["sigma_prime"] = sigma_prime
        two = self.step_ii(state, x, x_next, v_next, D_prev, psi_hat, sigma_prime)
        cert.update(two.info, kappa_max=two.kappa_max, Lambda=two.Lambda)
        if sigma_prime <= 0:
            return hold("lp-i", two.Lambda)
        if two.kappa <= 0:
            return hold(two.branch, two.Lambda)
        cert["sigma_dd"] = two.sigma_dd
        cert["kappa_candidate"] = two.kappa

        roa = self.lp_step_iii(two.sigma_dd, two.v_hat)
        if roa is None:
            return hold("lp-iii", two.Lambda)
        cert.update(lp_sigma=roa.sigma, x_bar=roa.x_bar, p=roa.p, psi_check=roa.psi_check)
        cert["eq36b_lower"] = dc.zeta1 / dc.alpha1 * roa.sigma
        cert["eq36b_upper"] = dc.alpha2 / dc.zeta2 * roa.sigma

        ok, lhs, rhs = check_step_iv(psi_hat, state.sigma, two.v_hat, state.v_hat, roa.p, dc, b)
        cert.update(iv_lhs=lhs, iv_rhs=rhs)
        if not ok:
            return hold("iv", two.Lambda)

        q = q_checks(psi_hat, state.sigma, roa.p, roa.sigma, dc, b, self.lam_min_P, self.sv_K)
        cert.update(q1=q[0], q2=q[1], q3=q[2])
        branch = "accept-eps" if two.branch == "ii.b" else "accept"
        sigma = sigma_update(None, None, state.sigma, two.kappa, roa.sigma, b)
        cert.update(branch=branch, kappa=two.kappa, sigma=sigma)
        new = GovernorState(
            v_hat=two.v_hat, kappa=two.kappa, sigma=sigma, Lambda=two.Lambda,
            psi_check=roa.psi_check, p=roa.p, x_bar=roa.x_bar, branch=branch,
        )
        return new, cert
