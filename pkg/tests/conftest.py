import pytest

from hylosol.functionals import PhysicsConfig
from hylosol.grid import RadialGrid
from hylosol.model import LatticePotential, NonlinearityModel

# filled by tests/test_acceptance.py; printed at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture
def focusing():
    return PhysicsConfig(0.0, NonlinearityModel(E0=1.0, mu=1.0, p=3.0))


@pytest.fixture
def linear():
    return PhysicsConfig(0.0, NonlinearityModel(E0=1.0, mu=0.0, p=3.0), LatticePotential.zero())


@pytest.fixture(scope="session")
def radial():
    return RadialGrid(1024, 40.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
