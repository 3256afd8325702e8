import pytest

from dipole_erw.lattice import builtin_lattice, derive_memory_params

ACCEPTANCE_LINES = []


@pytest.fixture
def hexagonal():
    return builtin_lattice("hexagonal")


@pytest.fixture
def line():
    return builtin_lattice("two_step_line")


@pytest.fixture
def diffusive_params():
    return derive_memory_params(0.6, 0.5, 3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
