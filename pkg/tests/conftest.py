import os

import pytest
from hypothesis import HealthCheck, settings

from exterior_maxwell.geometry import BlackHoleParams
from exterior_maxwell.numerics import AngularGrid, Grids, RadialGrid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def unit_mass():
    return BlackHoleParams(1.0)


@pytest.fixture(scope="session")
def small_grids(unit_mass):
    return Grids(RadialGrid(-40.0, 40.0, 321, unit_mass), AngularGrid(10))


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
