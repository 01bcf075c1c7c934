import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zonedispatch import bundled_case  # noqa: E402

ACCEPTANCE_LINES = []

TOYS = ["toy2_loss", "toy2_poz_valve", "toy2_valve_loss", "toy3_poz_valve", "toy3_reserve", "toy3_loss_reserve"]


@pytest.fixture(scope="session")
def case6():
    return bundled_case("6unit")


@pytest.fixture(scope="session")
def case15_lossless():
    return bundled_case("15unit_cond1")


@pytest.fixture(scope="session")
def case15_loss():
    return bundled_case("15unit_cond2")


@pytest.fixture(scope="session")
def case15_valve():
    return bundled_case("15unit_cond3")


@pytest.fixture(scope="session")
def solved():
    """Session cache of full solves, keyed by bundled case name."""
    from zonedispatch import solve

    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = solve(bundled_case(name))
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
