import pytest

from corrlab.functionals import bump_orbital, gaussian_orbital
from corrlab.grid import RadialGrid
from corrlab.potential import make_potential
from corrlab.scattering import solve_zero_energy


@pytest.fixture(scope="session")
def square_well():
    # kappa = sqrt(V0/2) = 1, so a = 1 - tanh(1)
    return make_potential("square-well", 2.0, 1.0)


@pytest.fixture(scope="session")
def bump():
    return make_potential("bump", 1.0, 1.0)


@pytest.fixture(scope="session")
def square_well_mode(square_well):
    return solve_zero_energy(square_well, RadialGrid(1e-3, 10.0))


@pytest.fixture(scope="session")
def bump_mode(bump):
    return solve_zero_energy(bump, RadialGrid(1e-3, 10.0))


@pytest.fixture(scope="session")
def gaussian():
    return gaussian_orbital(1.0)


@pytest.fixture(scope="session")
def bump_profile():
    return bump_orbital(1.0)


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / "runs")
