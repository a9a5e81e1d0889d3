"""ADMM for the slack-lifted tracking QP with suboptimality-certified termination.

One iteration, for step size ``rho``:

    y+  = E11 (rho z - mu) + (-E11 Wbar + E12 L) theta
    z+  = Proj_Z(y+ + mu / rho)
    mu+ = mu + rho (y+ - z+)

``E11`` and ``E12`` are blocks of the inverse KKT matrix of the equality
constrained y-subproblem. The optimizer state is ``w = (z, mu)``, measured in
the metric ``|w|_T^2 = |z|^2 + |mu|^2 / rho^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .condense import TightenedQp

log = logging.getLogger(__name__)

TRACE = 5
logging.addLevelName(TRACE, "TRACE")

EXACT_RESIDUAL = 1e-9
EXACT_BOUND = 1e-18


class SolverError(RuntimeError):
    """Raised when ADMM exceeds its iteration cap."""


@dataclass(frozen=True)
class KktFactor:
    """Blocks of the inverse of ``[[Hbar + rho I, Mbar'], [Mbar, 0]]``."""

    E11: np.ndarray
    E12: np.ndarray
    rho: float
    F: np.ndarray  # -E11 Wbar + E12 L

    def solve(self, r, c) -> np.ndarray:
        """``y`` solving ``(Hbar + rho I) y + Mbar' lam = r``, ``Mbar y = c``."""
        return self.E11 @ r + self.E12 @ c


def factorize(tqp: TightenedQp, rho: float) -> KktFactor:
    """Invert the KKT matrix of the y-subproblem (independent of the tightening level)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    n = tqp.n_y
    m = tqp.M_bar.shape[0]
    K = np.block([[tqp.H_bar + rho * np.eye(n), tqp.M_bar.T], [tqp.M_bar, np.zeros((m, m))]])
    if np.linalg.cond(K) > 1e14:
        raise np.linalg.LinAlgError("KKT matrix is singular; check positive definiteness on the equality null space")
    Kinv = np.linalg.inv(K)
    E11 = Kinv[:n, :n]
    E12 = Kinv[:n, n:]
    F = -E11 @ tqp.W_bar + E12 @ tqp.L
    return KktFactor(E11=E11, E12=E12, rho=float(rho), F=F)


def t_norm_sq(z, mu, rho: float) -> float:
    return float(z @ z + (mu @ mu) / rho**2)


def t_lambda_max(rho: float) -> float:
    return max(1.0, 1.0 / rho**2)


@dataclass
class OptimizerState:
    """ADMM iterates plus the two previous ``w = (z, mu)`` needed for the bound."""

    y: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    j: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n_y: int) -> "OptimizerState":
        return cls(y=np.zeros(n_y), z=np.zeros(n_y), mu=np.zeros(n_y))

    def restart(self) -> "OptimizerState":
        """Warm start: keep ``(y, z, mu)``, reset the counter and history."""
        return OptimizerState(y=self.y.copy(), z=self.z.copy(), mu=self.mu.copy())

    @property
    def w(self) -> np.ndarray:
        return np.concatenate([self.z, self.mu])


def admm_step(state: OptimizerState, factor: KktFactor, tqp: TightenedQp, theta) -> OptimizerState:
    rho = factor.rho
    y = factor.E11 @ (rho * state.z - state.mu) + factor.F @ theta
    z = tqp.project(y + state.mu / rho)
    mu = state.mu + rho * (y - z)
    history = (state.history + [(state.z, state.mu)])[-2:]
    return OptimizerState(y=y, z=z, mu=mu, j=state.j + 1, history=history)


def residual(state: OptimizerState) -> float:
    """Primal residual ``|y - z|``."""
    return float(np.linalg.norm(state.y - state.z))


def subopt_bound(state: OptimizerState, gamma: float, rho: float) -> tuple[float, float]:
    """``(D, D_r)`` bounding ``|w_j - w*|_T^2`` from ``|w_j - w_{j-2}|_T^2``.

    Infinite before two iterations have been taken.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if state.j < 2 or len(state.history) < 2:
        return np.inf, np.inf
    z2, mu2 = state.history[0]
    D = t_norm_sq(state.z - z2, state.mu - mu2, rho) / (1.0 / gamma - 1.0) ** 2
    return D, t_lambda_max(rho) * D


@dataclass
class AdmmResult:
    state: OptimizerState
    iterations: int
    residual: float
    D: float
    D_r: float
    trace: list | None = None


def run_admm(
    tqp: TightenedQp,
    factor: KktFactor,
    theta,
    warm_start: OptimizerState,
    gamma: float,
    exact: bool = False,
    max_iter: int = 1_000_000,
    keep_trace: bool = False,
) -> AdmmResult:
    """Iterate until both ``D_r <= sigma^2`` and ``r^2 <= sigma^2``.

    In exact mode the thresholds are ``r <= 1e-9`` and ``D_r <= 1e-18``
    regardless of the tightening level. At least two iterations are always
    taken since the bound needs ``w_{j-2}``.
    """
    theta = np.asarray(theta, dtype=float)
    sigma = tqp.sigma
    if exact:
        r_tol, d_tol = EXACT_RESIDUAL**2, EXACT_BOUND
    else:
        r_tol = d_tol = sigma**2
    rho = factor.rho
    lam_T = t_lambda_max(rho)
    scale = lam_T / (1.0 / gamma - 1.0) ** 2
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")

    # in-place form of admm_step; hot loop
    E11, F = factor.E11, factor.F
    n_eta = tqp.n_eta
    lo, hi = tqp.lower, tqp.upper
    Ftheta = F @ theta
    z, mu = warm_start.z.copy(), warm_start.mu.copy()
    y = warm_start.y.copy()
    prev = [None, None]
    trace = [] if keep_trace else None
    tracing = log.isEnabledFor(TRACE)
    j = 0
    r2 = np.inf
    d_r = np.inf
    while True:
        if j >= 2 and d_r <= d_tol and r2 <= r_tol:
            break
        if j >= max_iter:
            raise SolverError(
                f"ADMM exceeded {max_iter} iterations (sigma={sigma:.3e}, r={np.sqrt(r2):.3e}, D_r={d_r:.3e})"
            )
        prev[0], prev[1] = prev[1], (z, mu)
        y = E11 @ (rho * z - mu) + Ftheta
        arg = y + mu / rho
        z = arg.copy()
        np.clip(arg[n_eta:], lo, hi, out=z[n_eta:])
        mu = mu + rho * (y - z)
        j += 1
        dr = y - z
        r2 = float(dr @ dr)
        if j >= 2:
            z2, mu2 = prev[0]
            dz = z - z2
            dm = mu - mu2
            d_r = scale * float(dz @ dz + (dm @ dm) / rho**2)
        if trace is not None:
            trace.append((j, np.sqrt(r2), d_r))
        if tracing:
            log.log(TRACE, "j=%d r=%.3e D_r=%.3e", j, np.sqrt(r2), d_r)

    history = [h for h in prev if h is not None]
    state = OptimizerState(y=y, z=z, mu=mu, j=j, history=history)
    return AdmmResult(state=state, iterations=j, residual=float(np.sqrt(r2)), D=d_r / lam_T, D_r=d_r, trace=trace)


def extract_solution(state: OptimizerState, tqp: TightenedQp, n_u: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(eta, u0)`` read from the z iterate.

    The y iterate carries the same input block because the projection leaves
    it untouched.
    """
    eta = state.z[: tqp.n_eta].copy()
    return eta, eta[:n_u].copy()


def optimal_state(tqp: TightenedQp, theta, eta_star, mult_star) -> OptimizerState:
    """ADMM fixed point built from a primal-dual solution of the condensed QP.

    ``mult_star`` is the signed multiplier of the constraint rows (positive
    where the upper bound is active).
    """
    eta_star = np.asarray(eta_star, dtype=float)
    s_star = tqp.base.constraint_values(eta_star, np.asarray(theta, dtype=float))
    z = np.concatenate([eta_star, s_star])
    mu = np.concatenate([np.zeros(tqp.n_eta), np.asarray(mult_star, dtype=float)])
    return OptimizerState(y=z.copy(), z=z, mu=mu)
