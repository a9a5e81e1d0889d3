"""Suboptimal linear-quadratic MPC with ADMM, constraint tightening and a computation governor."""

from .admm import OptimizerState, SolverError, factorize, run_admm
from .condense import CondensedQp, OcpSpec, TightenedQp, condense, tighten
from .config import RunConfig
from .constants import ConstantsBundle, derived_constants, estimate_lipschitz, verify_assumptions
from .governor import ComputationGovernor, GovernorState
from .lp import LinearProgram, solve_lp
from .plant import PlantModel, equilibrium_pair, riccati_solve, steady_state_basis
from .simulation import Scenario, compare_cases, emit_csv, read_csv, run_closed_loop

__all__ = [
    "CondensedQp", "ComputationGovernor", "ConstantsBundle", "GovernorState", "LinearProgram", "OcpSpec",
    "OptimizerState", "PlantModel", "RunConfig", "Scenario", "SolverError", "TightenedQp", "compare_cases",
    "condense", "derived_constants", "emit_csv", "equilibrium_pair", "estimate_lipschitz", "factorize",
    "read_csv", "riccati_solve", "run_admm", "run_closed_loop", "solve_lp", "steady_state_basis", "tighten",
    "verify_assumptions",
]
