import numpy as np
import pytest

from degenbeam import assemble_beam_operator, build_grid, build_quadrature, make_power_profile

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sqrt_profile():
    return make_power_profile(0.5)


@pytest.fixture
def setup_sqrt(sqrt_profile):
    def make(n):
        g = build_grid(n)
        return g, assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)

    return make


def bump(x):
    return x**2 * (1.0 - x) ** 2


def unit(x):
    return np.ones_like(np.asarray(x, dtype=float))
