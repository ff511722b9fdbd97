import numpy as np
import pytest

from corrlab.errors import ValidationError
from corrlab.grid import RadialGrid, radial_derivatives, radial_lp_norm, radial_tensor_norms


def test_grid_nodes_and_extent():
    grid = RadialGrid(0.5, 10.0)
    assert grid.n == 20
    assert grid.nodes[0] == 0.0
    assert grid.nodes[-1] == pytest.approx(10.0)
    assert grid.describe()["nodes"] == 21
    assert grid.refined().dr == 0.25


@pytest.mark.parametrize("dr, r_max", [(0.0, 1.0), (-0.1, 1.0), (1.0, 2.0)])
def test_grid_rejects_bad_spacing(dr, r_max):
    with pytest.raises(ValidationError):
        RadialGrid(dr, r_max)


def test_derivatives_of_gaussian():
    grid = RadialGrid(0.01, 10.0)
    r = grid.nodes
    f = np.exp(-r ** 2 / 2)
    d = radial_derivatives(f, grid.dr)
    inner = r < 8
    e = np.exp(-r ** 2 / 2)
    assert np.max(np.abs(d[1] - (-r * e))[inner]) < 1e-8
    assert np.max(np.abs(d[2] - (r ** 2 - 1) * e)[inner]) < 1e-7
    assert np.max(np.abs(d[3] - (3 * r - r ** 3) * e)[inner]) < 1e-5


def test_odd_parity_derivative_of_u():
    grid = RadialGrid(0.01, 10.0)
    r = grid.nodes
    u = r * np.exp(-r ** 2 / 2)
    d1 = radial_derivatives(u, grid.dr, parity="odd")[1]
    assert d1[0] == pytest.approx(1.0, abs=1e-8)


def test_tensor_norms_match_closed_forms():
    grid = RadialGrid(0.01, 10.0)
    r = grid.nodes
    e = np.exp(-r ** 2 / 2)
    f = e.copy()
    inner = r < 8
    hess = radial_tensor_norms(f, grid.dr, 2)
    third = radial_tensor_norms(f, grid.dr, 3)
    hess_exact = np.sqrt((r ** 2 - 1) ** 2 * e ** 2 + 2 * e ** 2)
    third_exact = np.sqrt(((3 * r - r ** 3) * e) ** 2 + 6 * r ** 2 * e ** 2)
    assert np.max(np.abs(hess - hess_exact)[inner]) < 1e-6
    assert np.max(np.abs(third - third_exact)[inner]) < 1e-4
    assert hess[0] == pytest.approx(np.sqrt(3.0), rel=1e-6)


def test_tensor_norms_reject_high_order():
    with pytest.raises(ValidationError):
        radial_tensor_norms(np.ones(20), 0.1, 4)


def test_lp_norms_of_unit_gaussian():
    grid = RadialGrid(0.01, 12.0)
    r = grid.nodes
    sigma = 1.0
    f = (np.pi * sigma ** 2) ** -0.75 * np.exp(-r ** 2 / (2 * sigma ** 2))
    assert radial_lp_norm(f, grid.dr, 2) == pytest.approx(1.0, rel=1e-8)
    assert radial_lp_norm(f, grid.dr, np.inf) == pytest.approx(f[0])
    s = 6.0
    exact = (np.pi * sigma ** 2) ** -0.75 * (2 * np.pi * sigma ** 2 / s) ** (1.5 / s)
    assert radial_lp_norm(f, grid.dr, s) == pytest.approx(exact, rel=1e-8)
