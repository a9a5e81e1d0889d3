"""Condensed and slack-lifted QP forms of the tracking OCP.

The OCP over a horizon ``N`` is

    min  sum_k |x_k - x_v|_Q^2 + |u_k - u_v|_R^2 + |x_N - x_v|_P^2
    s.t. x_{k+1} = A x_k + B u_k,  u_k in U (k < N),  x_k in X (1 <= k <= N)

with parameter ``theta = (x_0, v)``. Eliminating the states gives

    min  1/2 eta' H eta + eta' W theta
    s.t. lower <= M eta - L theta <= upper

where the objective equals the OCP cost up to ``theta' Y theta``. Constraint
rows are ordered as all input rows ``D u_k`` (k = 0..N-1) followed by all
state rows ``C x_k`` (k = 1..N).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .plant import LqrSolution, PlantModel, SteadyStateBasis, equilibrium_pair


class InfeasibleTighteningError(ValueError):
    """Raised when a tightening level empties the constraint box."""


@dataclass(frozen=True)
class OcpSpec:
    """Problem data of the finite-horizon tracking OCP.

    Bounds are on ``C x`` and ``D u``; ``C`` and ``D`` default to identity.
    """

    model: PlantModel
    N: int
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    basis: SteadyStateBasis
    C: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        n_x, n_u = self.model.n_x, self.model.n_u
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("horizon N must be an integer >= 1")
        object.__setattr__(self, "N", int(self.N))
        for name in ("Q", "R", "P"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("x_lower", "x_upper", "u_lower", "u_upper"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        C = np.eye(n_x) if self.C is None else np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.eye(n_u) if self.D is None else np.atleast_2d(np.asarray(self.D, dtype=float))
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        if self.Q.shape != (n_x, n_x) or self.P.shape != (n_x, n_x) or self.R.shape != (n_u, n_u):
            raise ValueError("weight matrix dimensions do not match the plant")
        if C.shape[1] != n_x or D.shape[1] != n_u:
            raise ValueError("constraint output matrices do not match the plant")
        if self.x_lower.shape != (C.shape[0],) or self.x_upper.shape != (C.shape[0],):
            raise ValueError("state bounds must have one entry per row of C")
        if self.u_lower.shape != (D.shape[0],) or self.u_upper.shape != (D.shape[0],):
            raise ValueError("input bounds must have one entry per row of D")
        if np.any(self.x_lower >= self.x_upper) or np.any(self.u_lower >= self.u_upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if self.basis.G.shape[0] != n_x + n_u:
            raise ValueError("steady-state basis does not match the plant")

    @classmethod
    def from_lqr(cls, model, N, Q, R, lqr: LqrSolution, basis, x_bounds, u_bounds, C=None, D=None):
        """Build a spec whose terminal weight is the Riccati solution."""
        return cls(
            model=model, N=N, Q=Q, R=R, P=lqr.P,
            x_lower=x_bounds[0], x_upper=x_bounds[1],
            u_lower=u_bounds[0], u_upper=u_bounds[1],
            basis=basis, C=C, D=D,
        )

    @property
    def n_c(self) -> int:
        return self.C.shape[0] + self.D.shape[0]

    @property
    def n_theta(self) -> int:
        return self.model.n_x + self.basis.n_v

    def theta(self, x, v) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float), np.atleast_1d(np.asarray(v, dtype=float))])

    def stage_cost(self, xi, eta, v) -> float:
        """OCP objective evaluated directly on a state and input sequence."""
        N, n_x, n_u = self.N, self.model.n_x, self.model.n_u
        x_v, u_v = equilibrium_pair(self.basis, v)
        xs = np.reshape(xi, (N + 1, n_x)) - x_v
        us = np.reshape(eta, (N, n_u)) - u_v
        cost = sum(x @ self.Q @ x for x in xs[:N]) + xs[N] @ self.P @ xs[N]
        cost += sum(u @ self.R @ u for u in us)
        return float(cost)


@dataclass(frozen=True)
class CondensedQp:
    """``min 1/2 eta'H eta + eta'W theta  s.t.  lower <= M eta - L theta <= upper``."""

    H: np.ndarray
    W: np.ndarray
    M: np.ndarray
    L: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    Y: np.ndarray
    n_u_rows: int
    spec: OcpSpec = field(repr=False)

    @property
    def n_eta(self) -> int:
        return self.H.shape[0]

    @property
    def n_rows(self) -> int:
        return self.M.shape[0]

    def objective(self, eta, theta) -> float:
        eta = np.asarray(eta, dtype=float)
        return float(0.5 * eta @ self.H @ eta + eta @ self.W @ theta)

    def value(self, eta, theta) -> float:
        """OCP cost of ``eta`` at ``theta`` (objective plus the parameter offset)."""
        return self.objective(eta, theta) + float(theta @ self.Y @ theta)

    @cached_property
    def reduced_hessian_min_eig(self) -> float:
        """Smallest eigenvalue of the lifted Hessian on the null space of ``[M, -I]``."""
        Mbar = np.hstack([self.M, -np.eye(self.n_rows)])
        Hbar = scipy.linalg.block_diag(self.H, np.zeros((self.n_rows, self.n_rows)))
        Z = scipy.linalg.null_space(Mbar)
        return float(np.min(np.linalg.eigvalsh(Z.T @ Hbar @ Z)))

    def constraint_values(self, eta, theta) -> np.ndarray:
        return self.M @ np.asarray(eta, dtype=float) - self.L @ theta

    def is_feasible(self, eta, theta, sigma: float = 0.0, tol: float = 0.0) -> bool:
        s = self.constraint_values(eta, theta)
        return bool(np.all(s >= self.lower + sigma - tol) and np.all(s <= self.upper - sigma + tol))

    def bound_split(self):
        """``(lower_u, lower_x, upper_u, upper_x)`` stacked bound blocks."""
        k = self.n_u_rows
        return self.lower[:k], self.lower[k:], self.upper[:k], self.upper[k:]


def _prediction_matrices(model: PlantModel, N: int):
    """``Phi``, ``Gamma`` with ``(x_0, ..., x_N) = Phi x_0 + Gamma eta``."""
    n_x, n_u = model.n_x, model.n_u
    Phi = np.zeros(((N + 1) * n_x, n_x))
    Gamma = np.zeros(((N + 1) * n_x, N * n_u))
    Ak = np.eye(n_x)
    for k in range(N + 1):
        Phi[k * n_x : (k + 1) * n_x] = Ak
        Ak = model.A @ Ak
    for k in range(1, N + 1):
        for i in range(k):
            blk = np.linalg.matrix_power(model.A, k - 1 - i) @ model.B
            Gamma[k * n_x : (k + 1) * n_x, i * n_u : (i + 1) * n_u] = blk
    return Phi, Gamma


def condense(spec: OcpSpec) -> CondensedQp:
    """Eliminate the state sequence from the OCP."""
    model, N = spec.model, spec.N
    n_x, n_u, n_v = model.n_x, model.n_u, spec.basis.n_v
    Phi, Gamma = _prediction_matrices(model, N)

    Qbar = scipy.linalg.block_diag(*([spec.Q] * N + [spec.P]))
    Rbar = scipy.linalg.block_diag(*([spec.R] * N))
    Ex = np.tile(spec.basis.G_x, (N + 1, 1))
    Eu = np.tile(spec.basis.G_u, (N, 1))

    H = 2.0 * (Gamma.T @ Qbar @ Gamma + Rbar)
    H = 0.5 * (H + H.T)
    W = 2.0 * np.hstack([Gamma.T @ Qbar @ Phi, -(Gamma.T @ Qbar @ Ex + Rbar @ Eu)])
    Sx = np.hstack([Phi, -Ex])
    Su = np.hstack([np.zeros((N * n_u, n_x)), -Eu])
    Y = Sx.T @ Qbar @ Sx + Su.T @ Rbar @ Su

    Cbar = np.kron(np.eye(N), spec.C)
    Dbar = np.kron(np.eye(N), spec.D)
    M = np.vstack([Dbar, Cbar @ Gamma[n_x:]])
    L = np.zeros((M.shape[0], n_x + n_v))
    L[Dbar.shape[0] :, :n_x] = -Cbar @ Phi[n_x:]

    lower = np.concatenate([np.tile(spec.u_lower, N), np.tile(spec.x_lower, N)])
    upper = np.concatenate([np.tile(spec.u_upper, N), np.tile(spec.x_upper, N)])
    return CondensedQp(H=H, W=W, M=M, L=L, lower=lower, upper=upper, Y=Y, n_u_rows=Dbar.shape[0], spec=spec)


@dataclass(frozen=True)
class TightenedQp:
    """Slack-lifted QP over ``y = (eta, s)`` with bounds shrunk by ``sigma``.

    ``min 1/2 y'Hbar y + y'Wbar theta  s.t.  Mbar y = L theta,
    lower + sigma <= s <= upper - sigma``.
    """

    base: CondensedQp
    sigma: float

    @property
    def n_eta(self) -> int:
        return self.base.n_eta

    @property
    def n_y(self) -> int:
        return self.base.n_eta + self.base.n_rows

    @cached_property
    def H_bar(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.base.H, np.zeros((self.base.n_rows, self.base.n_rows)))

    @cached_property
    def W_bar(self) -> np.ndarray:
        return np.vstack([self.base.W, np.zeros((self.base.n_rows, self.base.W.shape[1]))])

    @cached_property
    def M_bar(self) -> np.ndarray:
        return np.hstack([self.base.M, -np.eye(self.base.n_rows)])

    @cached_property
    def S_eta(self) -> np.ndarray:
        return np.eye(self.n_y)[: self.n_eta]

    @cached_property
    def S_s(self) -> np.ndarray:
        return np.eye(self.n_y)[self.n_eta :]

    @property
    def L(self) -> np.ndarray:
        return self.base.L

    @property
    def lower(self) -> np.ndarray:
        return self.base.lower + self.sigma

    @property
    def upper(self) -> np.ndarray:
        return self.base.upper - self.sigma

    def reduced_hessian_min_eig(self) -> float:
        return self.base.reduced_hessian_min_eig

    def project(self, y) -> np.ndarray:
        """Projection onto the tightened box; only the slack block is constrained."""
        out = np.array(y, dtype=float)
        out[self.n_eta :] = np.clip(out[self.n_eta :], self.lower, self.upper)
        return out


def tighten(qp: CondensedQp, sigma: float, sigma_max: float | None = None) -> TightenedQp:
    """Lift ``qp`` to slack form with every bound shrunk by ``sigma``."""
    sigma = float(sigma)
    if sigma < 0:
        raise InfeasibleTighteningError(f"tightening must be non-negative, got {sigma}")
    if sigma_max is not None and sigma > sigma_max:
        raise InfeasibleTighteningError(f"tightening {sigma} exceeds the admissible maximum {sigma_max}")
    if np.any(qp.lower + sigma >= qp.upper - sigma):
        raise InfeasibleTighteningError(f"tightening {sigma} empties the constraint box")
    if qp.reduced_hessian_min_eig <= 0:
        raise ValueError("lifted Hessian is not positive definite on the equality null space")
    return TightenedQp(base=qp, sigma=sigma)


def reconstruct_states(spec: OcpSpec, x0, eta) -> np.ndarray:
    """Forward rollout ``(x_0, ..., x_N)`` of the input sequence ``eta``."""
    n_u = spec.model.n_u
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (spec.N * n_u,):
        raise ValueError(f"eta must have length {spec.N * n_u}")
    xs = [np.asarray(x0, dtype=float)]
    for k in range(spec.N):
        xs.append(spec.model.step(xs[-1], eta[k * n_u : (k + 1) * n_u]))
    return np.concatenate(xs)


@dataclass(frozen=True)
class CostWeightNorm:
    """Block weights of the trajectory norm: ``Q`` on x_0..x_{N-1}, ``P`` on x_N, ``R`` on inputs."""

    Q: np.ndarray
    P: np.ndarray
    R: np.ndarray
    N: int

    @classmethod
    def from_spec(cls, spec: OcpSpec) -> "CostWeightNorm":
        return cls(Q=spec.Q, P=spec.P, R=spec.R, N=spec.N)

    def squared(self, eta_err, xi_err) -> float:
        n_x, n_u = self.Q.shape[0], self.R.shape[0]
        xs = np.reshape(xi_err, (self.N + 1, n_x))
        us = np.reshape(eta_err, (self.N, n_u))
        total = np.einsum("ki,ij,kj->", xs[:-1], self.Q, xs[:-1])
        total += xs[-1] @ self.P @ xs[-1]
        total += np.einsum("ki,ij,kj->", us, self.R, us)
        return float(total)

    def min_eig(self) -> float:
        return float(min(np.linalg.eigvalsh(m).min() for m in (self.Q, self.P, self.R)))


def suboptimal_value(spec: OcpSpec, weights: CostWeightNorm, x0, v, eta) -> tuple[float, float]:
    """Value ``V`` of an input sequence about the equilibrium of ``v`` and ``sqrt(V)``.

    States are recovered by exact rollout of ``eta`` from ``x0``.
    """
    x_v, u_v = equilibrium_pair(spec.basis, v)
    xi = reconstruct_states(spec, x0, eta)
    eta_err = np.asarray(eta, dtype=float) - np.tile(u_v, spec.N)
    xi_err = xi - np.tile(x_v, spec.N + 1)
    V = max(weights.squared(eta_err, xi_err), 0.0)
    return V, float(np.sqrt(V))
