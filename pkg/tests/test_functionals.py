import numpy as np
import pytest
from scipy.integrate import quad

from corrlab.errors import (
    ConsistencyError,
    ContaminationError,
    OutOfHypothesisError,
    OutOfRegimeError,
    ResolutionError,
    ValidationError,
)
from corrlab.functionals import (
    autocorrelation,
    chi_profile,
    coupling_constants,
    default_chi,
    eta_window_functional,
    exponential_orbital,
    fn_initial,
    hamiltonian_moments,
    macro_to_micro,
    make_orbital,
    micro_to_macro,
    triple_norm,
    uniform_norm_table,
    window_data,
    window_functional,
    window_series,
    window_split,
)
from corrlab.grid import RadialGrid
from corrlab.potential import make_potential, potential_norms, scale_potential
from corrlab.propagator import RELATIVE, CartesianField, RadialField, evolve_radial_series
from corrlab.scattering import solve_zero_energy


# -------------------------------------------------------------------
# Cutoff and orbitals
# -------------------------------------------------------------------
def test_chi_profile():
    assert chi_profile(np.array([0.0, 0.5, 1.0]))[:3].tolist() == [1.0, 1.0, 1.0]
    assert chi_profile(1.5) == pytest.approx(0.5)
    assert chi_profile(2.0) == 0.0
    assert chi_profile(3.0) == 0.0
    r = np.linspace(1.0, 2.0, 101)
    assert np.all(np.diff(chi_profile(r)) <= 0)


def test_chi_half_line_mass():
    assert default_chi().l1_mass == pytest.approx(1.5, abs=1e-9)


def test_gaussian_orbital_norms(gaussian):
    sigma = 1.0
    assert gaussian.norms["l2"] == 1.0
    assert gaussian(0.0) == pytest.approx((np.pi * sigma ** 2) ** -0.75, rel=1e-9)
    assert gaussian.fourth_power == pytest.approx((np.pi * sigma ** 2) ** -1.5 * 2 ** -1.5, rel=1e-8)
    assert gaussian.norms["grad_l2"] == pytest.approx(np.sqrt(1.5) / sigma, rel=1e-8)
    assert gaussian.norms["weighted_sup"] > 0


def test_orbital_factory():
    assert make_orbital("exponential", 2.0).kind == "exponential"
    with pytest.raises(ValidationError):
        make_orbital("lorentzian")
    with pytest.raises(ValidationError):
        make_orbital("gaussian", 0.0)


def test_exponential_orbital_is_normalised():
    orb = exponential_orbital(1.0)
    # pi^{-1/2} e^{-r}
    assert orb(0.0) == pytest.approx(np.pi ** -0.5, rel=1e-8)


def test_autocorrelation_of_gaussian(gaussian):
    r = np.array([0.0, 0.5, 1.0, 2.0])
    A0 = gaussian.fourth_power
    assert autocorrelation(gaussian, r) == pytest.approx(A0 * np.exp(-r ** 2 / 2), rel=1e-4)


# -------------------------------------------------------------------
# Window functionals
# -------------------------------------------------------------------
@pytest.fixture(scope="module")
def central_bump():
    spec = make_potential("bump", 1.0, 1.0)
    grid = RadialGrid(0.05, 100.0)
    return spec, solve_zero_energy(spec, grid, scheme="central", min_points_per_range=20)


def test_window_vanishes_on_zero_mode(central_bump):
    spec, sol = central_bump
    flat = window_data(sol.grid)
    psi = flat.with_samples((1.0 - np.asarray(sol.omega_samples)) * flat.samples)
    baseline = window_functional(flat, sol, 4.0)
    assert baseline > 0
    assert window_functional(psi, sol, 4.0) <= 1e-12 * baseline


def _square_well_flat_density(r):
    # |d/dr 1/(1 - omega)|^2 for V0 = 2, R = 1: u = sinh(r)/cosh(1) inside, r - a outside
    a = 1.0 - np.tanh(1.0)
    if r <= 1.0:
        dq = np.cosh(1.0) * (np.sinh(r) - r * np.cosh(r)) / np.sinh(r) ** 2
    else:
        dq = -a / (r - a) ** 2
    return dq ** 2


def test_window_functional_of_constant_matches_quadrature(square_well_mode):
    grid = RadialGrid(1e-3, 10.0)
    flat = RadialField.from_function(grid, np.ones_like)
    L = 4.0

    def integrand(r):
        return 4 * np.pi * chi_profile(np.array([r / L]))[0] * _square_well_flat_density(r) * r ** 2

    expected = quad(integrand, 0.0, 1.0)[0] + quad(integrand, 1.0, 2 * L, points=[L])[0]
    assert window_functional(flat, square_well_mode, L) == pytest.approx(expected, rel=1e-3)


def test_window_functional_initial_scale(square_well_mode, bump_profile):
    grid = RadialGrid(1e-3, 10.0)
    Lambda, L = 400.0, 4.0
    psi = RadialField.from_function(grid, lambda r: bump_profile(r / Lambda))
    F0 = window_functional(psi, square_well_mode, L)
    flat = window_functional(RadialField.from_function(grid, np.ones_like), square_well_mode, L)
    # psi_Lambda is flat across the window, so F(0) is psi(0)^2 times the constant-datum value
    assert F0 == pytest.approx(bump_profile(np.zeros(1))[0] ** 2 * flat, rel=1e-2)
    scale = 1.0 + L ** 3 / Lambda ** 2
    assert scale / 3 <= F0 <= 3 * scale


def test_window_rejects_absorber_overlap(central_bump):
    _, sol = central_bump
    with pytest.raises(ContaminationError):
        window_functional(window_data(sol.grid), sol, 45.0)


def test_window_split_bounds_total(central_bump, gaussian):
    spec, sol = central_bump
    psi = window_data(sol.grid, gaussian, 10.0)
    out = window_split(psi, sol, spec, 10.0, 2.0, 1.0, 0.05)
    assert out["F"] >= 0
    assert out["F"] <= 2 * out["F1"] + 2 * out["F2"] + 1e-12
    assert "out_of_regime" not in out["diagnostics"]


def test_window_split_flags_wide_windows(central_bump, gaussian):
    spec, sol = central_bump
    psi = window_data(sol.grid, gaussian, 2.0)
    out = window_split(psi, sol, spec, 2.0, 4.0, 0.5, 0.05)
    assert out["diagnostics"]["out_of_regime"]


def test_window_split_needs_relative_mass(central_bump, gaussian):
    spec, sol = central_bump
    psi = window_data(sol.grid, gaussian, 10.0, mu=1.0)
    with pytest.raises(ValidationError):
        window_split(psi, sol, spec, 10.0, 2.0, 1.0, 0.05)
    with pytest.raises(ConsistencyError):
        window_split(window_data(sol.grid, gaussian, 10.0), sol, make_potential("bump", 2.0, 1.0),
                     10.0, 2.0, 1.0, 0.05)


def test_window_series_layout(central_bump, gaussian):
    spec, sol = central_bump
    psi = window_data(sol.grid, gaussian, 10.0)
    rows = window_series(psi, sol, spec, 10.0, [1.0, 2.0], [0.0, 0.5, 1.0], 0.05)
    assert len(rows) == 6
    assert [(row["T"], row["L"]) for row in rows[:2]] == [(0.0, 1.0), (0.0, 2.0)]
    single = window_split(psi, sol, spec, 10.0, 2.0, 1.0, 0.05)
    assert rows[-1]["F"] == pytest.approx(single["F"], rel=1e-9)


def test_stationary_zero_mode_stays_flat():
    spec = make_potential("bump", 1.0, 1.0)
    grid = RadialGrid(0.05, 2000.0)
    sol = solve_zero_energy(spec, grid, scheme="central", min_points_per_range=20)
    flat = window_data(grid)
    baseline = window_functional(flat, sol, 4.0)
    psi = flat.with_samples((1.0 - np.asarray(sol.omega_samples)) * flat.samples)
    for ev in evolve_radial_series(psi, spec, [50.0, 100.0], 0.05, RELATIVE):
        assert window_functional(ev, sol, 4.0) <= 1e-6 * baseline


def test_eta_window_functional_is_finite(bump, bump_mode, gaussian):
    out = eta_window_functional(gaussian, bump_mode, bump, 5.0, 1.0, 0.1, 0.05, n=16,
                                eta_values=(0.0, 0.5, 1.0))
    assert np.isfinite(out["value"])
    assert out["value"] >= 0
    assert len(out["integrand"]) == 3


# -------------------------------------------------------------------
# F_N(0)
# -------------------------------------------------------------------
def test_fn_initial_approaches_constant(square_well_mode, gaussian):
    N = 10000
    gaps = []
    for ell in (0.0025, 0.005, 0.01, 0.02):
        out = fn_initial(gaussian, square_well_mode, N, ell)
        assert out["N_ell"] == pytest.approx(N * ell)
        gaps.append(out["relative_gap"])
    assert gaps[-1] <= 0.02
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_fn_initial_regime_gate(square_well_mode, gaussian):
    with pytest.raises(OutOfRegimeError):
        fn_initial(gaussian, square_well_mode, 100, 0.001)


def test_fn_initial_zero_potential(gaussian):
    spec = make_potential("square-well", 0.0, 1.0)
    sol = solve_zero_energy(spec, RadialGrid(0.01, 5.0))
    assert fn_initial(gaussian, sol, 100, 0.1)["value"] == 0.0


# -------------------------------------------------------------------
# Triple norm
# -------------------------------------------------------------------
def test_triple_norm_of_gaussian():
    grid = RadialGrid(0.01, 12.0)
    psi = RadialField.from_function(grid, lambda r: np.exp(-r ** 2 / 2))
    report = triple_norm(psi)
    assert report.per_order[0]["sup"] == pytest.approx(1.0)
    assert report.per_order[0]["l1"] == pytest.approx((2 * np.pi) ** 1.5, rel=1e-8)
    assert report.total == pytest.approx(report.w31 + report.w3inf)


def test_triple_norm_rejects_under_resolved_data():
    grid = RadialGrid(0.02, 2.0)
    psi = RadialField.from_function(grid, lambda r: np.exp(-r ** 2 / (2 * 0.05 ** 2)))
    with pytest.raises(ResolutionError):
        triple_norm(psi)


def test_triple_norm_cartesian_agrees_with_radial():
    grid = RadialGrid(0.01, 12.0)
    radial = triple_norm(RadialField.from_function(grid, lambda r: np.exp(-r ** 2 / 2)))
    cart = triple_norm(CartesianField.from_radial_function(64, 0.2, lambda r: np.exp(-r ** 2 / 2)), check=False)
    for m in range(4):
        assert cart.per_order[m]["sup"] == pytest.approx(radial.per_order[m]["sup"], rel=0.1)
        assert cart.per_order[m]["l1"] == pytest.approx(radial.per_order[m]["l1"], rel=0.1)


# |grad^m exp(-r^2/2)| in closed form
GAUSSIAN_DERIVATIVE_NORMS = {
    1: lambda r: r * np.exp(-r ** 2 / 2),
    2: lambda r: np.sqrt((r ** 2 - 1) ** 2 + 2) * np.exp(-r ** 2 / 2),
    3: lambda r: np.sqrt(r ** 6 - 6 * r ** 4 + 15 * r ** 2) * np.exp(-r ** 2 / 2),
}


def test_triple_norm_derivative_orders_of_gaussian():
    grid = RadialGrid(0.01, 12.0)
    report = triple_norm(RadialField.from_function(grid, lambda r: np.exp(-r ** 2 / 2)))
    s3 = 3.0 - 12.0 ** (1.0 / 3.0)
    sups = {1: np.exp(-0.5), 2: np.sqrt(3.0), 3: GAUSSIAN_DERIVATIVE_NORMS[3](np.sqrt(s3))}
    assert report.per_order[1]["l1"] == pytest.approx(8 * np.pi, rel=1e-4)
    for m, norm in GAUSSIAN_DERIVATIVE_NORMS.items():
        l1 = 4 * np.pi * quad(lambda r: norm(r) * r ** 2, 0.0, np.inf)[0]
        assert report.per_order[m]["l1"] == pytest.approx(l1, rel=1e-4)
        assert report.per_order[m]["sup"] == pytest.approx(sups[m], rel=1e-4)


@pytest.mark.parametrize("Lambda", [2.0, 4.0])
def test_triple_norm_scales_with_lambda(Lambda):
    base = triple_norm(RadialField.from_function(RadialGrid(0.01, 12.0), lambda r: np.exp(-r ** 2 / 2)))
    grid = RadialGrid(0.01, 12.0 * Lambda)
    scaled = triple_norm(RadialField.from_function(grid, lambda r: np.exp(-(r / Lambda) ** 2 / 2)))
    for m in range(4):
        assert scaled.per_order[m]["l1"] == pytest.approx(Lambda ** (3 - m) * base.per_order[m]["l1"], rel=1e-5)
        assert scaled.per_order[m]["sup"] == pytest.approx(Lambda ** -m * base.per_order[m]["sup"], rel=1e-4)
    assert scaled.w3inf <= base.w3inf


# -------------------------------------------------------------------
# Energy moments and coupling constants
# -------------------------------------------------------------------
def test_energy_per_particle_limit(square_well, gaussian):
    out = hamiltonian_moments(gaussian, square_well, 10000)
    assert abs(out["e1_per_N"] - out["e1_limit"]) <= 0.01 * out["e1_limit"]
    assert out["h2_leading_per_N3"] == pytest.approx(out["h2_limit"], rel=0.02)
    norms = potential_norms(square_well)
    assert out["e1_limit"] == pytest.approx(1.5 + 0.5 * norms["L1"] * gaussian.fourth_power)


def test_energy_gap_halves_with_n(square_well, gaussian):
    gap = []
    for N in (1000, 2000):
        out = hamiltonian_moments(gaussian, square_well, N)
        gap.append(abs(out["e1_per_N"] - out["e1_limit"]))
    assert 1.8 <= gap[0] / gap[1] <= 2.2


def test_energy_moments_guards(square_well, gaussian):
    with pytest.raises(ValidationError):
        hamiltonian_moments(gaussian, square_well, 1)
    with pytest.raises(ValidationError):
        hamiltonian_moments(gaussian, scale_potential(square_well, 10), 10)


@pytest.mark.parametrize("which", ["square_well", "bump"])
def test_coupling_constants(request, which):
    spec = request.getfixturevalue(which)
    sol = request.getfixturevalue(which + "_mode")
    out = coupling_constants(spec, sol)
    assert out["residual"] <= 1e-8
    assert out["b"] > out["eight_pi_a"] > 0
    assert out["eight_pi_a"] == pytest.approx(8 * np.pi * sol.a, rel=1e-4)


def test_coupling_constants_zero_and_mismatch(square_well, bump_mode):
    zero = make_potential("bump", 0.0, 1.0)
    sol = solve_zero_energy(zero, RadialGrid(0.01, 5.0))
    assert coupling_constants(zero, sol)["b"] == 0.0
    with pytest.raises(ConsistencyError):
        coupling_constants(square_well, bump_mode)


# -------------------------------------------------------------------
# Uniform norms and units
# -------------------------------------------------------------------
def test_uniform_norm_table(bump_mode, bump_profile):
    table = uniform_norm_table(bump_profile, bump_mode, [50.0, 100.0, 200.0], m=1, p=2.0)
    assert table["uniform"]
    assert len(table["rows"]) == 3
    sup = uniform_norm_table(bump_profile, bump_mode, [50.0, 100.0, 200.0], m=0, p=np.inf)
    assert sup["ratio"] < 1.1


def test_gradient_l4_norm_is_uniform(bump_mode, bump_profile):
    lambdas = [50.0, 100.0, 200.0, 400.0]
    table = uniform_norm_table(bump_profile, bump_mode, lambdas, m=1, p=4.0)
    assert [row["Lambda"] for row in table["rows"]] == lambdas
    assert table["uniform"]
    assert table["ratio"] <= 4.0


def test_uniform_norm_table_hypothesis_gate(bump_mode, bump_profile):
    with pytest.raises(OutOfHypothesisError):
        uniform_norm_table(bump_profile, bump_mode, [50.0], m=0, p=2.0)


def test_micro_macro_conversion():
    macro = micro_to_macro(100, 0.01, 1e-4)
    assert macro == pytest.approx({"Lambda": 100.0, "L": 2.0, "T": 1.0})
    back = macro_to_micro(macro["Lambda"], macro["L"], macro["T"])
    assert back == pytest.approx({"N": 100.0, "ell": 0.01, "t": 1e-4})
    with pytest.raises(OutOfRegimeError):
        micro_to_macro(100, 0.001, 1e-4)


# -------------------------------------------------------------------
# Acceptance-scale window experiments
# -------------------------------------------------------------------
@pytest.fixture(scope="module")
def formation_setup():
    spec = make_potential("bump", 1.0, 1.0)
    grid = RadialGrid(0.02, 2000.0)
    return spec, solve_zero_energy(spec, grid, scheme="central", min_points_per_range=50)


@pytest.mark.slow
def test_window_functional_collapses(formation_setup, bump_profile):
    spec, sol = formation_setup
    psi = window_data(sol.grid, bump_profile, 400.0)
    rows = window_series(psi, sol, spec, 400.0, 4.0, [0.0, 20.0, 50.0, 100.0], 0.02)
    F0 = rows[0]["F"]
    assert F0 > 0
    for row in rows[1:]:
        assert row["F"] / F0 <= 0.1


@pytest.mark.slow
def test_f2_scales_like_inverse_square():
    spec = make_potential("bump", 1.0, 1.0)
    orbital = exponential_orbital(1.0)
    lambdas = [100.0, 200.0, 400.0, 800.0]
    F2 = []
    for lam in lambdas:
        grid = RadialGrid(0.02, 5.0 * lam)
        sol = solve_zero_energy(spec, grid, scheme="central", min_points_per_range=50)
        F2.append(window_split(window_data(grid, orbital, lam), sol, spec, lam, 4.0, 20.0, 0.02)["F2"])
    slope = np.polyfit(np.log(lambdas), np.log(F2), 1)[0]
    assert -2.3 <= slope <= -1.7


@pytest.mark.slow
def test_f1_decays_in_time(bump_profile):
    from corrlab.dispersive import DecaySeries, fit_exponent

    spec = make_potential("bump", 1.0, 1.0)
    grid = RadialGrid(0.02, 2500.0)
    sol = solve_zero_energy(spec, grid, scheme="central", min_points_per_range=50)
    psi = window_data(grid, bump_profile, 800.0)
    part1 = psi.with_samples(np.asarray(sol.omega_samples) * psi.samples)
    times = [10.0, 20.0, 40.0, 80.0, 120.0, 160.0, 200.0]
    F1 = [window_functional(ev, sol, 4.0) for ev in evolve_radial_series(part1, spec, times, 0.02, RELATIVE)]
    fit = fit_exponent(DecaySeries(times=times, sup_norms=F1), (10.0, 200.0))
    assert fit["alpha"] >= 0.8
    assert fit["residual"] <= 0.15
