import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kgbreather.bifurcation import BifurcationContext, continue_branch
from kgbreather.radial import make_grid
from kgbreather.stationary import shoot_ground_state

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ALPHAS = (1e-3, -1e-3, 2e-3, -2e-3, 1e-2, -1e-2)

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return make_grid(100.0, 4096)


@pytest.fixture(scope="session")
def gs(grid):
    return shoot_ground_state(1.0, 1.0, grid)


@pytest.fixture(scope="session")
def ctx1(grid, gs):
    return BifurcationContext.build(grid=grid, s=1, K=8, gs=gs)


@pytest.fixture(scope="session")
def ctx2(grid, gs):
    return BifurcationContext.build(grid=grid, s=2, K=8, gs=gs)


@pytest.fixture(scope="session")
def branch1(ctx1):
    return continue_branch(ctx1, ALPHAS)


@pytest.fixture(scope="session")
def branch2(ctx2):
    return continue_branch(ctx2, ALPHAS)


@pytest.fixture(scope="session")
def coarse1(ctx1):
    """Context on the coarse grid used for dense singular-value work."""
    return ctx1.with_grid(make_grid(30.0, 1280))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
