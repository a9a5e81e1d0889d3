"""Tuning constants, the constants derived from them, and assumption checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .condense import CondensedQp, OcpSpec, tighten
from .plant import LqrSolution, equilibrium_pair


class ConfigurationError(ValueError):
    """Raised when tuning constants violate a standing assumption."""


def largest_sv(a) -> float:
    return float(np.linalg.svd(np.atleast_2d(a), compute_uv=False)[0])


@dataclass(frozen=True)
class ConstantsBundle:
    """Optimizer, Lipschitz and governor tuning values.

    ``lambda_lower=None`` means "use the lower step bound" as the floor of the
    suboptimality budget.
    """

    gamma: float = 0.999
    rho: float = 0.3
    phi: float = 1.0
    beta_chi: float = 3.0
    beta_w: float = 200.0
    pi1: float = 0.99
    pi2: float = 1e-6
    sigma_max: float = 0.1
    sigma_min: float = 1e-4
    omega: float = 1.0 / 300.0
    lambda_upper: float = 90.0
    lambda_lower: float | None = None
    decay: float = 0.4

    def replace(self, **changes) -> "ConstantsBundle":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivedConstants:
    alpha1: float
    zeta1: float
    alpha2: float
    zeta2: float
    d: float
    eps_lower: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)


def derived_constants(spec: OcpSpec, lqr: LqrSolution, beta_chi, phi, pi1, pi2, strict: bool = True) -> DerivedConstants:
    """Contraction and gain constants of the value-function and tightening recursions."""
    lam_q = float(np.linalg.eigvalsh(spec.Q).min())
    if beta_chi**2 <= lam_q:
        raise ConfigurationError(f"beta_chi^2 = {beta_chi**2} must exceed lambda_min(Q) = {lam_q}")
    sv_b = largest_sv(spec.model.B)
    sv_ai = largest_sv(spec.model.A - np.eye(spec.model.n_x))
    lam_hchi = min(float(np.linalg.eigvalsh(m).min()) for m in (spec.Q, lqr.P, spec.R))

    alpha1 = 1.0 - math.sqrt(1.0 - lam_q / beta_chi**2)
    zeta1 = math.sqrt(sv_b) * beta_chi * (phi + 1.0)
    alpha2 = 1.0 - (pi1 + pi2 * sv_b * (phi + 1.0))
    zeta2 = pi2 * (sv_ai + sv_b) / math.sqrt(lam_hchi)
    d = spec.N * lam_q / float(np.linalg.eigvalsh(lqr.P).max()) + 1.0
    if strict and alpha2 <= 0:
        raise ConfigurationError(f"alpha2 = {alpha2:.6g} <= 0; decrease pi1 or pi2")
    return DerivedConstants(alpha1=alpha1, zeta1=zeta1, alpha2=alpha2, zeta2=zeta2, d=d)


def epsilon_lower(derived: DerivedConstants, bundle: ConstantsBundle, strict: bool = True) -> float:
    """Smallest admissible reference step for the quiescent-window construction."""
    a1, z1, d = derived.alpha1, derived.zeta1, derived.d
    eps = (bundle.omega * bundle.sigma_min / bundle.beta_chi) * (z1 / (a1 * math.sqrt(d)) - z1)
    if strict and eps <= 0:
        raise ConfigurationError(f"lower step bound {eps:.3g} <= 0 (requires alpha1*sqrt(d) < 1)")
    return eps


def with_epsilon(derived: DerivedConstants, bundle: ConstantsBundle, strict: bool = True) -> DerivedConstants:
    return replace(derived, eps_lower=epsilon_lower(derived, bundle, strict=strict))


# -- assumption checks ---------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    witness: str
    hard: bool = True


@dataclass
class AssumptionReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
            lines.append(f"[{status}] {c.name}: {c.witness}")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {c.name: {"passed": c.passed, "hard": c.hard, "witness": c.witness} for c in self.checks}


def _is_box(Cm: np.ndarray) -> bool:
    return bool(np.all(np.count_nonzero(Cm, axis=1) == 1))


def _stabilizable(A, B) -> tuple[bool, str]:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0:
            rank = np.linalg.matrix_rank(np.hstack([A - lam * np.eye(n), B]))
            if rank < n:
                return False, f"uncontrollable mode at eigenvalue {lam:.6g}"
    return True, "every unstable mode is controllable"


def verify_assumptions(
    spec: OcpSpec,
    lqr: LqrSolution,
    qp: CondensedQp,
    bundle: ConstantsBundle,
    v_samples,
) -> AssumptionReport:
    """Evaluate the standing assumptions on a configuration.

    ``v_samples`` are reference values drawn from the admissible reference
    set; the interiority checks are evaluated on them.
    """
    report = AssumptionReport()
    add = report.checks.append
    v_samples = [np.atleast_1d(np.asarray(v, dtype=float)) for v in v_samples]

    def margins(v, shrink):
        x_v, u_v = equilibrium_pair(spec.basis, v)
        cx, du = spec.C @ x_v, spec.D @ u_v
        return min(
            np.min(spec.x_upper - shrink - cx), np.min(cx - spec.x_lower - shrink),
            np.min(spec.u_upper - shrink - du), np.min(du - spec.u_lower - shrink),
        )

    origin = min(np.min(spec.x_upper), np.min(-spec.x_lower), np.min(spec.u_upper), np.min(-spec.u_lower))
    worst = min((margins(v, 0.0) for v in v_samples), default=np.inf)
    add(Check("A1 compact, origin and equilibria interior", origin > 0 and worst > 0,
              f"origin margin {origin:.4g}, worst equilibrium margin {worst:.4g}"))

    ok, msg = _stabilizable(spec.model.A, spec.model.B)
    add(Check("A2 (A, B) stabilizable", ok, msg))

    eig = {n: float(np.linalg.eigvalsh(m).min()) for n, m in (("P", lqr.P), ("Q", spec.Q), ("R", spec.R))}
    res = lqr.residual(spec.model, spec.Q, spec.R)
    add(Check("A3 P, Q, R > 0 and Riccati", min(eig.values()) > 0 and res <= 1e-10,
              f"min eigenvalues {eig}, Riccati residual {res:.3e}"))

    red = qp.reduced_hessian_min_eig
    add(Check("A4 Hessian positive definite on equality null space", red > 0, f"reduced min eigenvalue {red:.4g}"))

    worst5 = min((margins(v, bundle.sigma_min) for v in v_samples), default=np.inf)
    add(Check("A5 references interior to sigma_min-tightened set", worst5 > 0,
              f"worst margin {worst5:.4g} at sigma_min={bundle.sigma_min}"))

    try:
        dc = derived_constants(spec, lqr, bundle.beta_chi, bundle.phi, bundle.pi1, bundle.pi2, strict=False)
        conds = {
            "alpha1<1": dc.alpha1 < 1,
            "0<alpha2<1": 0 < dc.alpha2 < 1,
            "zeta2/alpha2<alpha1/zeta1": dc.alpha2 > 0 and dc.zeta2 / dc.alpha2 < dc.alpha1 / dc.zeta1,
            "alpha1*sqrt(d)<1": dc.alpha1 * math.sqrt(dc.d) < 1,
        }
        wit = ", ".join(f"{k}={'ok' if v else 'violated'}" for k, v in conds.items())
        wit += (f" (alpha1={dc.alpha1:.6g}, zeta1={dc.zeta1:.6g}, alpha2={dc.alpha2:.6g},"
                f" zeta2={dc.zeta2:.6g}, d={dc.d:.6g})")
        add(Check("A6 recursion constants", all(conds.values()), wit))
    except ConfigurationError as exc:
        add(Check("A6 recursion constants", False, str(exc)))

    add(Check("A7 constraint sets are hyper-rectangles", _is_box(spec.C) and _is_box(spec.D),
              "C and D select one coordinate per row" if _is_box(spec.C) and _is_box(spec.D)
              else "C or D couples several coordinates"))

    bad = []
    if not 0 < bundle.gamma < 1:
        bad.append("gamma in (0,1)")
    if bundle.rho <= 0:
        bad.append("rho > 0")
    if not bundle.beta_chi > 1:
        bad.append("beta_chi > 1")
    if not (0 < bundle.pi1 < 1 and 0 < bundle.pi2 < 1):
        bad.append("pi1, pi2 in (0,1)")
    if not 0 < bundle.decay < 1:
        bad.append("decay in (0,1)")
    if not 0 < bundle.omega < 1:
        bad.append("omega in (0,1)")
    if not 0 < bundle.sigma_min < bundle.sigma_max:
        bad.append("0 < sigma_min < sigma_max")
    if not bundle.lambda_upper > 0:
        bad.append("lambda_upper > 0")
    add(Check("tuning ranges", not bad, "all in range" if not bad else "violated: " + ", ".join(bad)))

    # the box stays nonempty only up to half the narrowest bound width
    widest = 0.5 * float(np.min(qp.upper - qp.lower))
    add(Check("sigma_max keeps the tightened box nonempty", bundle.sigma_max < widest,
              f"sigma_max={bundle.sigma_max:.4g}, largest admissible {widest:.4g}", hard=False))
    return report



# -- sampling estimates ----------------------------------------------------------


class EstimationError(RuntimeError):
    """Too few feasible samples to form an estimate."""


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling region and effort for :func:`estimate_lipschitz`.

    States are drawn uniformly from the state box scaled by ``x_scale``;
    references from ``[v_lower, v_upper]``. The second point of each pair is
    offset by at most ``pair_radius`` times the half-width of each coordinate.
    """

    v_lower: float
    v_upper: float
    samples: int = 500
    seed: int = 0
    safety: float = 1.5
    x_scale: float = 1.0
    pair_radius: float = 0.05
    sigma_fraction: float = 0.5
    gamma_solves: int = 10
    gamma_max_iter: int = 5000
    min_feasible: int = 10


@dataclass(frozen=True)
class LipschitzEstimate:
    beta_chi: float
    phi: float
    beta_w: float
    gamma: float
    raw: dict
    pairs: int
    rejected: int
    gamma_solves: int

    def to_text(self) -> str:
        return "\n".join([
            f"beta_chi = {self.beta_chi:.6g}  (raw max {self.raw['beta_chi']:.6g})",
            f"phi      = {self.phi:.6g}  (raw max {self.raw['phi']:.6g})",
            f"beta_w   = {self.beta_w:.6g}  (raw max {self.raw['beta_w']:.6g})",
            f"gamma    = {self.gamma:.6g}",
            f"pairs = {self.pairs}, rejected = {self.rejected}, gamma solves = {self.gamma_solves}",
        ])


def _gamma_ratio(tqp, factor, theta, w_star, start, max_iter: int) -> float:
    """Largest one-step contraction of ``|w_j - w*|_T`` seen from ``start``."""
    from .admm import t_norm_sq

    rho = factor.rho
    z, mu = start.z.copy(), start.mu.copy()
    Ftheta = factor.F @ theta
    n_eta = tqp.n_eta
    worst = 0.0
    err = np.sqrt(t_norm_sq(z - w_star.z, mu - w_star.mu, rho))
    for _ in range(max_iter):
        if err <= 1e-8:
            break
        y = factor.E11 @ (rho * z - mu) + Ftheta
        z = y + mu / rho
        z[n_eta:] = np.clip(z[n_eta:], tqp.lower, tqp.upper)
        mu = mu + rho * (y - z)
        new = np.sqrt(t_norm_sq(z - w_star.z, mu - w_star.mu, rho))
        worst = max(worst, new / err)
        err = new
    return worst


def estimate_lipschitz(spec: OcpSpec, qp: CondensedQp, bundle: ConstantsBundle, cfg: SamplerConfig) -> LipschitzEstimate:
    """Empirical ``(beta_chi, phi, beta_w, gamma)`` from random parameter pairs.

    The first three are maxima of the ratios

        |psi*(a) - psi*(b)| / |theta_a - theta_b|
        |u*(Sigma_a) - u*(Sigma_b)| / |Sigma_a - Sigma_b|
        |w*(a) - w*(b)|_T / |theta_a - theta_b|

    times ``cfg.safety``. ``gamma`` is the largest one-step contraction of
    ADMM towards ``w*`` (iterates within ``1e-8`` of ``w*`` are ignored).

    Raises
    ------
    EstimationError
        If fewer than ``cfg.min_feasible`` pairs are feasible.
    """
    from .admm import OptimizerState, factorize, optimal_state, t_norm_sq
    from .governor import lp_step_i
    from .qp_oracle import OracleInfeasible, solve_condensed

    if cfg.samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(cfg.seed)
    n_x = spec.model.n_x
    n_v = spec.basis.n_v
    if n_v != 1:
        raise ValueError("sampling is implemented for scalar references")
    if not (np.allclose(spec.C, np.eye(n_x))):
        raise ValueError("sampling assumes the state box is on x itself (C = I)")
    x_mid = 0.5 * (spec.x_lower + spec.x_upper)
    x_half = 0.5 * (spec.x_upper - spec.x_lower) * cfg.x_scale
    lo = np.concatenate([x_mid - x_half, [cfg.v_lower]])
    hi = np.concatenate([x_mid + x_half, [cfg.v_upper]])
    half = 0.5 * (hi - lo)
    rho = bundle.rho
    factor = factorize(tighten(qp, 0.0), rho)

    def solve(theta, sigma):
        sol = solve_condensed(qp, theta, sigma)
        psi = float(np.sqrt(max(sol.objective + theta @ qp.Y @ theta, 0.0)))
        return sol, psi

    best = {"beta_chi": 0.0, "phi": 0.0, "beta_w": 0.0}
    gamma = 0.0
    pairs = rejected = gsolves = 0
    for _ in range(cfg.samples):
        ta = rng.uniform(lo, hi)
        tb = ta + cfg.pair_radius * half * rng.uniform(-1.0, 1.0, size=ta.size)
        room = min(lp_step_i(qp, ta[:n_x], bundle.sigma_max), lp_step_i(qp, tb[:n_x], bundle.sigma_max))
        if room <= 0:
            rejected += 1
            continue
        sa, sb = np.sort(rng.uniform(0.0, cfg.sigma_fraction * room, size=2))
        try:
            sol_a, psi_a = solve(ta, sa)
            sol_b, psi_b = solve(tb, sa)
            sol_c, _ = solve(ta, sb)
        except OracleInfeasible:
            rejected += 1
            continue
        pairs += 1
        dtheta = float(np.linalg.norm(ta - tb))
        if dtheta > 0:
            best["beta_chi"] = max(best["beta_chi"], abs(psi_a - psi_b) / dtheta)
        if sb > sa:
            du = np.linalg.norm(sol_a.eta[: spec.model.n_u] - sol_c.eta[: spec.model.n_u])
            best["phi"] = max(best["phi"], float(du) / (sb - sa))
        tqp = tighten(qp, sa)
        wa = optimal_state(tqp, ta, sol_a.eta, sol_a.mult)
        wb = optimal_state(tqp, tb, sol_b.eta, sol_b.mult)
        if dtheta > 0:
            dw = np.sqrt(t_norm_sq(wa.z - wb.z, wa.mu - wb.mu, rho))
            best["beta_w"] = max(best["beta_w"], dw / dtheta)
        if gsolves < cfg.gamma_solves:
            start = OptimizerState(y=wb.y.copy(), z=wb.z.copy(), mu=wb.mu.copy())
            gamma = max(gamma, _gamma_ratio(tqp, factor, ta, wa, start, cfg.gamma_max_iter))
            gsolves += 1
    if pairs < cfg.min_feasible:
        raise EstimationError(f"only {pairs} feasible sample pairs (need {cfg.min_feasible})")
    return LipschitzEstimate(
        beta_chi=cfg.safety * best["beta_chi"],
        phi=cfg.safety * best["phi"],
        beta_w=cfg.safety * best["beta_w"],
        gamma=gamma,
        raw=dict(best),
        pairs=pairs,
        rejected=rejected,
        gamma_solves=gsolves,
    )
