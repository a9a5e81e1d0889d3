"""Exact QP solutions by active-set enumeration.

Used as an independent reference for the ADMM iterates and for sampling the
Lipschitz constants. Only suitable for small problems: candidate active sets
are enumerated by increasing size and the first one satisfying the KKT
conditions is returned (it is optimal since the QP is strictly convex).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .condense import CondensedQp


class OracleInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class QpSolution:
    eta: np.ndarray
    mult: np.ndarray  # signed row multipliers, positive on upper-active rows
    objective: float
    active: tuple


def solve_box_qp(H, q, M, lower, upper, tol: float = 1e-9, max_active: int | None = None) -> QpSolution:
    """``min 1/2 x'Hx + q'x  s.t.  lower <= M x <= upper`` by enumeration."""
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n, m = H.shape[0], M.shape[0]
    scale = max(1.0, np.abs(lower).max(initial=0.0), np.abs(upper).max(initial=0.0))
    kmax = min(n, m) if max_active is None else min(max_active, n, m)
    for k in range(kmax + 1):
        for rows in combinations(range(m), k):
            Ma = M[list(rows)]
            if k and np.linalg.matrix_rank(Ma) < k:
                continue
            for sides in product((0, 1), repeat=k):
                rhs = np.array([upper[r] if s else lower[r] for r, s in zip(rows, sides)])
                kkt = np.block([[H, Ma.T], [Ma, np.zeros((k, k))]])
                sol = np.linalg.solve(kkt, np.concatenate([-q, rhs]))
                x, lam = sol[:n], sol[n:]
                # multiplier sign: upper-active >= 0, lower-active <= 0
                signs = np.where(np.array(sides, dtype=bool), 1.0, -1.0)
                if k and np.any(signs * lam < -tol * max(1.0, np.abs(lam).max())):
                    continue
                s = M @ x
                if np.any(s < lower - tol * scale) or np.any(s > upper + tol * scale):
                    continue
                mult = np.zeros(m)
                mult[list(rows)] = lam
                return QpSolution(eta=x, mult=mult, objective=float(0.5 * x @ H @ x + q @ x), active=rows)
    raise OracleInfeasible("no KKT point found: the QP is infeasible")


def solve_condensed(qp: CondensedQp, theta, sigma: float = 0.0, tol: float = 1e-9) -> QpSolution:
    """Exact minimizer of the condensed QP with bounds tightened by ``sigma``."""
    theta = np.asarray(theta, dtype=float)
    offset = qp.L @ theta
    return solve_box_qp(
        qp.H, qp.W @ theta, qp.M,
        qp.lower + sigma + offset, qp.upper - sigma + offset, tol=tol,
    )


def optimal_value(qp: CondensedQp, theta, sigma: float = 0.0) -> tuple[float, float, QpSolution]:
    """``(V, sqrt(V), solution)`` of the tightened OCP at ``theta``."""
    sol = solve_condensed(qp, theta, sigma)
    V = max(sol.objective + float(theta @ qp.Y @ theta), 0.0)
    return V, float(np.sqrt(V)), sol
