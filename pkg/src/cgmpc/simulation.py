"""Closed-loop simulation of plant, ADMM optimizer and computation governor.

Three cases share one schedule:

``a1``
    Governed reference, tightened constraints, ADMM stopped by its
    suboptimality bound.
``exact-desired``
    ``v_hat = v``, no tightening, ADMM run to machine precision.
``exact-governed``
    ``v_hat`` replayed from an ``a1`` run, no tightening, exact solves.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .admm import OptimizerState, extract_solution, factorize, run_admm
from .condense import CondensedQp, CostWeightNorm, OcpSpec, condense, suboptimal_value, tighten
from .constants import ConstantsBundle, DerivedConstants, derived_constants, with_epsilon
from .governor import ComputationGovernor, lp_step_i
from .plant import LqrSolution

log = logging.getLogger(__name__)

CASES = ("a1", "exact-desired", "exact-governed")


class ScenarioError(ValueError):
    """The scenario violates a precondition (e.g. infeasible initial state)."""


def reference_schedule(segments, n_v: int = 1):
    """Piecewise-constant ``v_t`` from ``[(t_start, v), ...]``."""
    segs = sorted((int(t0), np.atleast_1d(np.asarray(v, dtype=float))) for t0, v in segments)
    if not segs or segs[0][0] > 0:
        raise ScenarioError("reference schedule must start at t = 0")
    for _, v in segs:
        if v.size != n_v:
            raise ScenarioError(f"reference values must have length {n_v}")

    def v_at(t: int) -> np.ndarray:
        cur = segs[0][1]
        for t0, v in segs:
            if t0 <= t:
                cur = v
        return cur

    return v_at


@dataclass
class Scenario:
    spec: OcpSpec
    lqr: LqrSolution
    bundle: ConstantsBundle
    x0: np.ndarray
    segments: list
    steps: int = 60
    case: str = "a1"
    v_hat_trace: list | None = None  # required for exact-governed

    def __post_init__(self):
        if self.steps < 1:
            raise ScenarioError("steps must be at least 1")
        if self.case not in CASES:
            raise ScenarioError(f"unknown case {self.case!r}; expected one of {CASES}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.spec.model.n_x,):
            raise ScenarioError(f"x0 must have length {self.spec.model.n_x}")
        if self.case == "exact-governed":
            if self.v_hat_trace is None or len(self.v_hat_trace) < self.steps:
                raise ScenarioError("exact-governed needs a v_hat trace at least as long as the run")

    def v_at(self, t):
        return reference_schedule(self.segments, self.spec.basis.n_v)(t)


@dataclass
class StepRecord:
    t: int
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    kappa: float
    sigma: float
    Lambda: float
    iterations: int
    residual: float
    d_r: float
    psi_hat: float
    psi_check: float
    p: float
    branch: str
    walltime: float
    eta: np.ndarray | None = None
    D: float = float("nan")
    cert: dict = field(default_factory=dict)


def _setup(scn: Scenario):
    spec, bundle = scn.spec, scn.bundle
    qp = condense(spec)
    dc = derived_constants(spec, scn.lqr, bundle.beta_chi, bundle.phi, bundle.pi1, bundle.pi2, strict=False)
    dc = with_epsilon(dc, bundle, strict=False)
    factor = factorize(tighten(qp, 0.0), bundle.rho)
    return qp, dc, factor


def run_closed_loop(scn: Scenario, max_iter: int = 1_000_000) -> list[StepRecord]:
    """Simulate ``scn.steps`` instants and return one record per instant.

    Raises
    ------
    ScenarioError
        If the tightening LP is infeasible at ``x0``.
    SolverError
        If an ADMM solve exceeds ``max_iter``.
    """
    spec, bundle = scn.spec, scn.bundle
    qp, dc, factor = _setup(scn)
    weights = CostWeightNorm.from_spec(spec)
    n_u = spec.model.n_u
    x = scn.x0.copy()
    if lp_step_i(qp, x, bundle.sigma_max) <= 0:
        raise ScenarioError("initial state admits no constraint tightening (outside the feasible region)")
    v_at = reference_schedule(scn.segments, spec.basis.n_v)
    governed = scn.case == "a1"
    exact = not governed

    gov = None
    if governed:
        if not math.isfinite(dc.eps_lower) or dc.eps_lower <= 0:
            raise ScenarioError(f"lower step bound {dc.eps_lower:.3g} is not positive")
        gov = ComputationGovernor(spec, qp, scn.lqr, bundle, dc)
        gstate = gov.initial_state(x, v_at(0))

    ws = OptimizerState.zeros(qp.n_eta + qp.n_rows)
    tqp_cache: dict[float, object] = {}
    records = []
    cert: dict = {}
    for t in range(scn.steps):
        v = v_at(t)
        tic = time.perf_counter()
        if governed:
            v_hat, sigma = gstate.v_hat, gstate.sigma
        elif scn.case == "exact-desired":
            v_hat, sigma = v, 0.0
        else:
            v_hat, sigma = np.atleast_1d(np.asarray(scn.v_hat_trace[t], dtype=float)), 0.0
        tqp = tqp_cache.get(sigma)
        if tqp is None:
            tqp = tighten(qp, sigma, bundle.sigma_max)
            tqp_cache = {sigma: tqp}
        theta = spec.theta(x, v_hat)
        res = run_admm(tqp, factor, theta, ws.restart(), bundle.gamma, exact=exact, max_iter=max_iter)
        eta, u = extract_solution(res.state, tqp, n_u)
        _, psi_hat = suboptimal_value(spec, weights, x, v_hat, eta)
        x_next = spec.model.step(x, u)

        if governed:
            rec_state = gstate
            gstate, cert_next = gov.tick(gstate, x, x_next, v_at(t + 1), res.D, psi_hat)
        walltime = time.perf_counter() - tic

        records.append(StepRecord(
            t=t, x=x.copy(), u=u, v=v.copy(), v_hat=np.array(v_hat, dtype=float),
            kappa=rec_state.kappa if governed else 1.0,
            sigma=sigma,
            Lambda=rec_state.Lambda if governed else float("nan"),
            iterations=res.iterations, residual=res.residual, d_r=res.D_r, psi_hat=psi_hat,
            psi_check=rec_state.psi_check if governed else float("nan"),
            p=rec_state.p if governed else float("nan"),
            branch=rec_state.branch if governed else "fixed",
            walltime=walltime, eta=eta, D=res.D, cert=cert,
        ))
        if governed:
            cert = cert_next
        log.info("t=%d case=%s iters=%d sigma=%.3e v_hat=%s", t, scn.case, res.iterations, sigma, v_hat)
        ws = res.state
        x = x_next
    return records


# -- output ----------------------------------------------------------------------


def csv_header(n_x: int, n_u: int, n_v: int = 1) -> list[str]:
    vcols = ["v", "v_hat"] if n_v == 1 else [f"v_{i + 1}" for i in range(n_v)] + [f"v_hat_{i + 1}" for i in range(n_v)]
    return (["t"] + [f"x_{i + 1}" for i in range(n_x)] + [f"u_{i + 1}" for i in range(n_u)] + vcols
            + ["kappa", "sigma", "lambda", "iterations", "residual", "d_r_bound", "psi_hat", "psi_check",
               "p_level", "branch", "walltime_s"])


def emit_csv(records: list[StepRecord], path, deterministic: bool = False) -> None:
    """Write records as CSV; floats use ``repr`` so they parse back exactly.

    ``deterministic=True`` writes ``walltime_s`` as 0 so repeated runs are
    byte-identical.
    """
    if not records:
        raise ValueError("no records to write")
    r0 = records[0]
    header = csv_header(r0.x.size, r0.u.size, r0.v.size)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [str(r.t)]
            row += [repr(float(a)) for a in r.x]
            row += [repr(float(a)) for a in r.u]
            row += [repr(float(a)) for a in r.v]
            row += [repr(float(a)) for a in r.v_hat]
            row += [repr(float(a)) for a in (r.kappa, r.sigma, r.Lambda)]
            row.append(str(int(r.iterations)))
            row += [repr(float(a)) for a in (r.residual, r.d_r, r.psi_hat, r.psi_check, r.p)]
            row.append(r.branch)
            row.append(repr(0.0 if deterministic else float(r.walltime)))
            w.writerow(row)


def read_csv(path) -> list[StepRecord]:
    """Parse a file written by :func:`emit_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_x = sum(1 for h in header if h.startswith("x_"))
    n_u = sum(1 for h in header if h.startswith("u_"))
    n_v = 1 if "v" in header else sum(1 for h in header if h.startswith("v_") and not h.startswith("v_hat"))
    out = []
    for row in body:
        vals = iter(row)
        t = int(next(vals))
        x = np.array([float(next(vals)) for _ in range(n_x)])
        u = np.array([float(next(vals)) for _ in range(n_u)])
        v = np.array([float(next(vals)) for _ in range(n_v)])
        v_hat = np.array([float(next(vals)) for _ in range(n_v)])
        kappa, sigma, lam = (float(next(vals)) for _ in range(3))
        iters = int(next(vals))
        residual, d_r, psi_hat, psi_check, p = (float(next(vals)) for _ in range(5))
        branch = next(vals)
        walltime = float(next(vals))
        out.append(StepRecord(t=t, x=x, u=u, v=v, v_hat=v_hat, kappa=kappa, sigma=sigma, Lambda=lam,
                              iterations=iters, residual=residual, d_r=d_r, psi_hat=psi_hat,
                              psi_check=psi_check, p=p, branch=branch, walltime=walltime))
    return out


# -- comparison ----------------------------------------------------------------


def convergence_step(records: list[StepRecord], tol: float = 1e-9) -> int | None:
    """First ``t`` from which ``|v_hat - v| <= tol`` holds to the end of the run."""
    step = None
    for r in records:
        if np.linalg.norm(r.v_hat - r.v) <= tol:
            if step is None:
                step = r.t
        else:
            step = None
    return step


def case_summary(records: list[StepRecord]) -> dict:
    iters = np.array([r.iterations for r in records])
    return {
        "steps": len(records),
        "mean_iterations": float(iters.mean()),
        "total_iterations": int(iters.sum()),
        "max_iterations": int(iters.max()),
        "convergence_step": convergence_step(records),
        "walltime_s": float(sum(r.walltime for r in records)),
    }


def compare_cases(logs: dict) -> dict:
    """Per-case iteration statistics for runs over the same schedule."""
    lengths = {len(v) for v in logs.values()}
    if len(lengths) != 1:
        raise ValueError(f"logs have different lengths: { {k: len(v) for k, v in logs.items()} }")
    return {case: case_summary(recs) for case, recs in logs.items()}


def summary_text(summary: dict) -> str:
    """Flat ``case.key = value`` lines."""
    lines = []
    for case, stats in summary.items():
        for k, v in stats.items():
            lines.append(f"{case}.{k} = {v}")
    return "\n".join(lines) + "\n"


def run_all(spec, lqr, bundle, x0, segments, steps) -> dict:
    """Run ``a1`` then both exact cases; the governed case replays the ``a1`` reference trace."""
    a1 = run_closed_loop(Scenario(spec, lqr, bundle, x0, segments, steps, "a1"))
    trace = [r.v_hat for r in a1]
    c2 = run_closed_loop(Scenario(spec, lqr, bundle, x0, segments, steps, "exact-desired"))
    c3 = run_closed_loop(Scenario(spec, lqr, bundle, x0, segments, steps, "exact-governed", v_hat_trace=trace))
    return {"a1": a1, "exact-desired": c2, "exact-governed": c3}
