from functools import lru_cache

import numpy as np
import pytest

from stochmech.scenarios import default_scenario
from stochmech.schrodinger import born_density, decompose, extract_drifts, propagate
from stochmech.verify import PotentialField


class Solved:
    """Solved scenario with the derived fields most tests need."""

    def __init__(self, name, n_points=513, dt=1e-3):
        sc = default_scenario(name, n_points=n_points, dt=dt)
        self.sc = sc
        self.params = sc.params
        self.grid = sc.grid
        self.tgrid = sc.tgrid
        self.history = propagate(sc.psi0(), sc.params, sc.grid, sc.tgrid)
        self.rho = born_density(self.history)
        self.ap = decompose(self.history)
        self.drifts = extract_drifts(self.ap, sc.params)
        self.potential = PotentialField.from_params(sc.params, sc.grid)


@lru_cache(maxsize=None)
def solved(name, n_points=513, dt=1e-3):
    return Solved(name, n_points, dt)


@pytest.fixture(scope="session")
def ground():
    return solved("harmonic_ground")


@pytest.fixture(scope="session")
def coherent():
    return solved("coherent")


@pytest.fixture(scope="session")
def free():
    return solved("free_packet")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import SUMMARY

    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in sorted(SUMMARY):
            terminalreporter.write_line(line)
