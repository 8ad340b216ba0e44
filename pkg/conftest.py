"""Shared fixtures: grids, quadratures and the ground states the suites reuse."""
import numpy as np
import pytest

from models.schemas import PhysicsParams
from utils.balakrishnan import build_quadrature
from utils.ground_states import ground_state_solver
from utils.spectral import Field, Grid


@pytest.fixture(scope="session")
def intercritical_1d():
    return PhysicsParams(1, 0.6, 3.0)


@pytest.fixture(scope="session")
def mass_critical_1d():
    return PhysicsParams(1, 0.7, 2.8)


@pytest.fixture(scope="session")
def intercritical_2d():
    return PhysicsParams(2, 0.75, 2.0)


@pytest.fixture(scope="session")
def quad_06():
    return build_quadrature(0.6)


@pytest.fixture(scope="session")
def quad_07():
    return build_quadrature(0.7)


@pytest.fixture(scope="session")
def quad_075():
    return build_quadrature(0.75)


@pytest.fixture(scope="session")
def ground_state_1d(intercritical_1d):
    """Q for d = 1, s = 0.6, alpha = 3"""
    return ground_state_solver.solve_Q(Grid(1, 1024, 40.0), intercritical_1d)


@pytest.fixture(scope="session")
def ground_state_2d(intercritical_2d):
    """Q for d = 2, s = 0.75, alpha = 2"""
    return ground_state_solver.solve_Q(Grid(2, 128, 20.0), intercritical_2d)


@pytest.fixture(scope="session")
def thresholds_1d(ground_state_1d):
    return ground_state_solver.intercritical_thresholds(ground_state_1d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gaussian_1d():
    grid = Grid(1, 512, 20.0)
    return Field(grid, values=np.exp(-grid.coordinates[0] ** 2))
