"""Discrete LTI plant, LQR synthesis and steady-state reference parameterization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class RiccatiError(RuntimeError):
    """Raised when the Riccati fixed-point iteration fails to converge."""


class SteadyStateError(ValueError):
    """Raised when the plant admits no nontrivial equilibrium family."""


def _as_matrix(a) -> np.ndarray:
    return np.atleast_2d(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time plant ``x+ = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A)
        B = _as_matrix(self.B)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.atleast_1d(u)


@dataclass(frozen=True)
class LqrSolution:
    """Terminal weight ``P`` and LQR gain ``K`` (control law ``u = -K x``)."""

    P: np.ndarray
    K: np.ndarray
    iterations: int = 0

    def residual(self, model: PlantModel, Q, R) -> float:
        """Infinity norm of the Riccati fixed-point residual at ``P``."""
        A, B, P = model.A, model.B, self.P
        K = np.linalg.solve(_as_matrix(R) + B.T @ P @ B, B.T @ P @ A)
        return float(np.max(np.abs(P - (_as_matrix(Q) + A.T @ P @ A - (A.T @ P @ B) @ K))))

    def closed_loop_radius(self, model: PlantModel) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(model.A - model.B @ self.K))))


def riccati_solve(model: PlantModel, Q, R, tol: float = 1e-12, max_iter: int = 100_000) -> LqrSolution:
    """Solve ``P = Q + A'PA - (A'PB) K`` with ``K = (R + B'PB)^-1 B'PA``.

    The recursion is iterated from ``P = Q`` until successive iterates agree
    to ``tol`` in the max norm.

    Raises
    ------
    RiccatiError
        If the iteration does not converge within ``max_iter`` steps, or the
        resulting closed loop ``A - BK`` is not Schur stable.
    """
    Q = _as_matrix(Q)
    R = _as_matrix(R)
    if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) <= 0:
        raise ValueError("Q must be positive definite")
    if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
        raise ValueError("R must be positive definite")
    A, B = model.A, model.B
    P = Q.copy()
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            P_next = Q + A.T @ P @ A - (A.T @ P @ B) @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise RiccatiError("Riccati iteration diverged (is (A, B) stabilizable?)")
        done = np.max(np.abs(P_next - P)) <= tol
        P = P_next
        if done:
            break
    else:
        raise RiccatiError(f"Riccati iteration did not converge in {max_iter} iterations")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    sol = LqrSolution(P=P, K=K, iterations=it)
    if sol.closed_loop_radius(model) >= 1.0:
        raise RiccatiError("A - BK is not Schur stable")
    return sol


@dataclass(frozen=True)
class SteadyStateBasis:
    """Orthonormal basis ``G = (G_x, G_u)`` of the null space of ``[A - I, B]``."""

    G: np.ndarray
    n_x: int

    @property
    def G_x(self) -> np.ndarray:
        return self.G[: self.n_x]

    @property
    def G_u(self) -> np.ndarray:
        return self.G[self.n_x :]

    @property
    def n_v(self) -> int:
        return self.G.shape[1]


def steady_state_basis(model: PlantModel, sign: int = 1, rtol: float = 1e-12) -> SteadyStateBasis:
    """Null-space basis of ``Z = [A - I, B]`` parameterizing all equilibria.

    Columns are orthonormal. Each column is oriented so that the first
    nonzero entry of its state block is non-negative; ``sign=-1`` then negates
    the whole basis, which is how a reference convention with the opposite
    orientation is reproduced.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    Z = np.hstack([model.A - np.eye(model.n_x), model.B])
    G = scipy.linalg.null_space(Z, rcond=rtol)
    if G.shape[1] == 0:
        raise SteadyStateError("[A - I, B] has a trivial null space: the origin is the only equilibrium")
    for k in range(G.shape[1]):
        col = G[: model.n_x, k]
        if not np.any(np.abs(col) > rtol):
            col = G[:, k]
        lead = col[np.argmax(np.abs(col) > rtol)]
        if lead < 0:
            G[:, k] = -G[:, k]
    return SteadyStateBasis(G=sign * G, n_x=model.n_x)


def equilibrium_pair(basis: SteadyStateBasis, v) -> tuple[np.ndarray, np.ndarray]:
    """Return the steady state and input ``(G_x v, G_u v)``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return basis.G_x @ v, basis.G_u @ v


def equilibrium_reference(basis: SteadyStateBasis, x) -> np.ndarray | None:
    """Reference ``v`` whose equilibrium state is ``x``, or ``None`` if there is none."""
    x = np.asarray(x, dtype=float)
    v, *_ = np.linalg.lstsq(basis.G_x, x, rcond=None)
    if np.linalg.norm(basis.G_x @ v - x) > 1e-9 * max(1.0, np.linalg.norm(x)):
        return None
    return v
