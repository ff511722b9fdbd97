import numpy as np
import pytest

from corrlab.errors import ValidationError
from corrlab.functionals import coupling_constants
from corrlab.gp import (
    coupling_comparison,
    evolve_gp,
    evolve_gp_cartesian,
    evolve_gp_series,
    gp_energy,
    perturbation_slope,
    phase_aligned_distance,
)
from corrlab.grid import RadialGrid
from corrlab.propagator import CartesianField, evolve_free, free_gaussian_exact, radial_gaussian

GRID = RadialGrid(0.02, 30.0)


@pytest.fixture(scope="module")
def comparison(square_well, square_well_mode, gaussian):
    return coupling_comparison(gaussian, square_well, square_well_mode, 1.0, 2e-4, samples=11, grid=GRID)


def test_linear_energy_of_gaussian(gaussian):
    phi = evolve_gp(gaussian, 0.0, 0.0, 0.01, GRID)
    assert phi.mass == pytest.approx(1.0, rel=1e-8)
    assert gp_energy(phi) == pytest.approx(1.5, rel=1e-6)


def test_twin_runs_conserve_mass_and_energy(comparison):
    mass = [row["mass"] for row in comparison["rows"]]
    energy = [row["energy"] for row in comparison["rows"]]
    assert max(mass) - min(mass) <= 1e-10
    assert max(energy) - min(energy) <= 1e-6 * abs(energy[0])
    assert max(comparison["mass_born"]) - min(comparison["mass_born"]) <= 1e-10
    assert len(comparison["times"]) == 11


def test_couplings_are_ordered(comparison, square_well, square_well_mode):
    consts = coupling_constants(square_well, square_well_mode)
    assert comparison["g_scattering"] == consts["eight_pi_a"]
    assert comparison["g_born"] == consts["b"]
    assert comparison["g_born"] > comparison["g_scattering"]
    assert comparison["divergence"][0] == pytest.approx(0.0, abs=1e-14)
    assert comparison["divergence"][-1] > 0


def test_divergence_grows_at_the_perturbative_rate(square_well, square_well_mode, gaussian):
    out = coupling_comparison(gaussian, square_well, square_well_mode, 0.01, 2e-4, grid=GRID,
                              times=[0.0, 0.01])
    delta = abs(out["g_scattering"] - out["g_born"])
    expected = perturbation_slope(gaussian, delta, GRID)
    assert out["divergence"][-1] / 0.01 == pytest.approx(expected, rel=0.2)


def test_zero_coupling_is_the_linear_flow(gaussian):
    phi = evolve_gp(gaussian, 0.0, 1.0, 0.01, GRID)
    linear = evolve_free(radial_gaussian(GRID, 1.0, mu=1.0), 1.0, 1.0)
    exact = free_gaussian_exact(GRID.nodes, 1.0, 1.0, 1.0)
    assert np.max(np.abs(phi.samples[1:-1] - linear.samples[1:-1])) <= 1e-10
    assert np.max(np.abs(phi.samples[1:-1] - exact[1:-1])) <= 1e-8


def test_phase_aligned_distance_ignores_global_phase(gaussian):
    phi = evolve_gp(gaussian, 1.0, 0.1, 0.01, GRID)
    rotated = type(phi)(grid=phi.grid, samples=phi.samples * np.exp(0.7j), g=phi.g, time=phi.time)
    assert phase_aligned_distance(phi, rotated) < 1e-12


def test_series_validation(gaussian):
    with pytest.raises(ValidationError):
        evolve_gp_series(gaussian, 1.0, [1.0, 0.5], 0.01, GRID)
    with pytest.raises(ValidationError):
        evolve_gp(gaussian, 1000.0, 0.1, 0.01, GRID)


def test_series_matches_single_run(gaussian):
    series = evolve_gp_series(gaussian, 2.0, [0.0, 0.05, 0.1], 0.01, GRID)
    single = evolve_gp(gaussian, 2.0, 0.1, 0.01, GRID)
    assert [phi.time for phi in series] == [0.0, 0.05, 0.1]
    assert phase_aligned_distance(series[-1], single) < 1e-6


def test_constant_field_on_torus_rotates_in_phase():
    c, g, T = 0.5, 2.0, 1.0
    field_ = CartesianField(samples=np.full((16, 16, 16), c, dtype=complex), h=0.5)
    out = evolve_gp_cartesian(field_, g, T, 0.01)
    assert np.max(np.abs(out.samples - c * np.exp(-1j * g * c ** 2 * T))) <= 1e-12
    assert out.time == pytest.approx(T)
