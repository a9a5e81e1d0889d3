"""Dense two-phase simplex for small linear programs.

Problems are stated as ``max c'x  s.t.  A x <= b`` with ``x`` free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-10


class LPError(RuntimeError):
    pass


class LPInfeasible(LPError):
    """The constraint set is empty."""


class LPUnbounded(LPError):
    """The objective is unbounded above on the constraint set."""


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape != (b.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, c.size)}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _simplex(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> bool:
    """Minimize the last-row objective of tableau ``T`` in place with Bland's rule.

    Returns ``False`` if the objective is unbounded below.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :-1]
        candidates = np.flatnonzero((cost < -_TOL) & allowed)
        if candidates.size == 0:
            return True
        col = int(candidates[0])
        column = T[:m, col]
        positive = column > _TOL
        if not np.any(positive):
            return False
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _TOL * max(1.0, abs(best)))
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, row, col)
        basis[row] = col
    raise LPError("simplex iteration limit reached")


def _solve_standard(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_iter: int) -> np.ndarray:
    """``min c'x  s.t.  A x = b, x >= 0`` with ``b >= 0``."""
    m, n = A.shape
    # phase 1: artificial variables n..n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _simplex(T, basis, np.ones(n + m, dtype=bool), max_iter)
    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPInfeasible("linear program is infeasible")

    # drive zero-level artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            nz = np.flatnonzero(np.abs(T[i, :n]) > 1e-9)
            if nz.size == 0:
                continue
            _pivot(T, i, int(nz[0]))
            basis[i] = int(nz[0])
        keep.append(i)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[i] for i in keep]
    T2[-1, :n] = c
    for i, j in enumerate(basis):
        T2[-1] -= c[j] * T2[i]
    if not _simplex(T2, basis, np.ones(n, dtype=bool), max_iter):
        raise LPUnbounded("linear program is unbounded")
    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T2[i, -1]
    return x


def _solve_free(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_iter: int) -> np.ndarray:
    """``min c'x  s.t.  A x <= b`` with free ``x`` via ``x = p - q`` and slacks."""
    m, n = A.shape
    Aeq = np.hstack([A, -A, np.eye(m)])
    beq = b.copy()
    neg = beq < 0
    Aeq[neg] *= -1.0
    beq[neg] *= -1.0
    ceq = np.concatenate([c, -c, np.zeros(m)])
    z = _solve_standard(ceq, Aeq, beq, max_iter)
    return z[:n] - z[n : 2 * n]


def solve_lp(lp: LinearProgram, lexicographic: bool = True, max_iter: int = 10_000) -> np.ndarray:
    """Maximize ``c'x`` subject to ``A x <= b``.

    With ``lexicographic=True`` ties among optimal points are broken by
    successively minimizing ``x_0``, ``x_1``, ... over the optimal face
    (coordinates along which the face is unbounded are left as found).

    Raises
    ------
    LPInfeasible, LPUnbounded
    """
    c, A, b = lp.c, lp.A, lp.b
    x = _solve_free(-c, A, b, max_iter)
    if not lexicographic:
        return x
    opt = float(c @ x)
    slack = 1e-11 * max(1.0, abs(opt))
    A_face = np.vstack([A, -c])
    b_face = np.concatenate([b, [-(opt - slack)]])
    for k in range(c.size):
        e = np.zeros(c.size)
        e[k] = 1.0
        try:
            xk = _solve_free(e, A_face, b_face, max_iter)
        except LPUnbounded:
            continue
        except LPInfeasible:
            break
        x = xk
        A_face = np.vstack([A_face, e])
        b_face = np.concatenate([b_face, [xk[k] + 1e-12 * max(1.0, abs(xk[k]))]])
    return x
