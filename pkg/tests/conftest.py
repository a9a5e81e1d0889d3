import numpy as np
import pytest

from cgmpc.condense import OcpSpec, condense
from cgmpc.config import RunConfig
from cgmpc.plant import PlantModel, riccati_solve, steady_state_basis
from cgmpc.simulation import run_all

EXAMPLE_STEPS = 150
SHORT_STEPS = 60


@pytest.fixture(scope="session")
def example_cfg():
    return RunConfig.default()


@pytest.fixture(scope="session")
def example(example_cfg):
    return example_cfg.build()


@pytest.fixture(scope="session")
def example_logs(example_cfg, example):
    """All three cases over the long schedule. Runs are causal, so the first
    60 records equal a 60-step run."""
    return run_all(example.spec, example.lqr, example.bundle, example_cfg.x0, example_cfg.segments, EXAMPLE_STEPS)


@pytest.fixture(scope="session")
def short_logs(example_logs):
    return {k: v[:SHORT_STEPS] for k, v in example_logs.items()}


def random_instance(rng, n_x=None, n_u=None, N=None, bound_scale=1.0):
    """Random stabilizable plant with a box OCP around the origin."""
    n_x = n_x or int(rng.integers(1, 4))
    n_u = n_u or int(rng.integers(1, 3))
    N = N or int(rng.integers(1, 5))
    A = rng.normal(size=(n_x, n_x))
    A *= rng.uniform(0.5, 1.1) / max(abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(n_x, n_u))
    model = PlantModel(A, B)
    G = rng.normal(size=(n_x, n_x))
    Q = G @ G.T + 0.5 * np.eye(n_x)
    Hn = rng.normal(size=(n_u, n_u))
    R = Hn @ Hn.T + 0.1 * np.eye(n_u)
    lqr = riccati_solve(model, Q, R)
    basis = steady_state_basis(model)
    xb = bound_scale * rng.uniform(0.5, 2.0, size=n_x)
    ub = bound_scale * rng.uniform(0.5, 2.0, size=n_u)
    spec = OcpSpec.from_lqr(model, N, Q, R, lqr, basis, (-xb, xb), (-ub, ub))
    return spec, lqr, condense(spec)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
