import numpy as np
import pytest

from cqnls.ground_state import default_grid, solve_ground_state
from cqnls.modulation import ModulationContext

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def gs05():
    """Ground state at omega = 0.05 on the n = 2000 working grid."""
    return solve_ground_state(0.05, grid=default_grid(0.05, n=2000))


@pytest.fixture(scope="session")
def ctx05(gs05):
    return ModulationContext.build(gs05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
