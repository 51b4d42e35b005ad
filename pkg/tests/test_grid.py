import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard_lab import (ChoquardParams, GridError, ParameterError,
                          RadialField, differentiate, integrate_radial,
                          laplacian_sector, make_grid, sector_symmetric,
                          sphere_area)
from choquard_lab.grid import field_from_callable


def test_uniform_grid_construction():
    g = make_grid(3, 10.0, 100, 1.0)
    assert_allclose(g.nodes[1] - g.nodes[0], 0.1)
    assert g.nodes[-1] == 10.0
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(g.quad_weights > 0)
    # trapezoid weights sum to the interval length
    assert_allclose(g.quad_weights.sum(), 10.0, rtol=1e-12)


def test_stretched_grid_construction():
    g = make_grid(3, 20.0, 200, 1.02)
    assert np.all(np.diff(g.nodes) > 0)
    assert_allclose(g.nodes[-1], 20.0)
    assert_allclose(g.quad_weights.sum(), 20.0, rtol=1e-12)


def test_d1_grid_for_model_oracle():
    g = make_grid(1, 15.0, 128, 1.0)
    assert g.d == 1
    assert g.n == 128
    assert np.all(g.quad_weights > 0)


def test_make_grid_rejects_bad_arguments():
    with pytest.raises(GridError):
        make_grid(3, -1.0, 100)
    with pytest.raises(GridError):
        make_grid(3, 10.0, 8)
    with pytest.raises(GridError):
        make_grid(3, 10.0, 100, 0.9)
    with pytest.raises(GridError):
        make_grid(0, 10.0, 100)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_monomial_quadrature(d, k):
    g = make_grid(d, 10.0, 200, 1.0)
    val = integrate_radial(g, RadialField(g, g.nodes ** k))
    exact = sphere_area(d) * 10.0 ** (k + d) / (k + d)
    assert abs(val / exact - 1.0) <= 1e-6


def test_integrate_unit_ball_indicator():
    # Monte-Carlo oracle for the ball volume
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(400000, 3))
    mc = np.mean(np.sum(pts ** 2, axis=1) <= 1.0) * 8.0
    exact = 4.0 * np.pi / 3.0
    assert abs(mc - exact) < 4 * 8.0 * np.sqrt(0.52 * 0.48 / 400000)

    g = make_grid(3, 2.0, 4000, 1.0)
    vals = np.where(g.nodes < 1.0, 1.0, 0.0)
    j = np.argmin(np.abs(g.nodes - 1.0))
    assert abs(g.nodes[j] - 1.0) < 1e-12
    vals[j] = 0.5  # mean-value convention at the jump node
    val = integrate_radial(g, RadialField(g, vals))
    assert_allclose(val, exact, rtol=1e-5)


def test_integrate_exponential():
    g = make_grid(3, 40.0, 2000, 1.0)
    val = integrate_radial(g, field_from_callable(g, lambda r: np.exp(-r)))
    assert_allclose(val, 8.0 * np.pi, rtol=1e-8)


def test_integrate_zero():
    g = make_grid(4, 12.0, 64, 1.01)
    assert integrate_radial(g, RadialField(g, np.zeros(g.n))) == 0.0


def test_laplacian_gaussian_pointwise():
    g = make_grid(3, 8.0, 200, 1.0)
    f = field_from_callable(g, lambda r: np.exp(-r ** 2))
    got = laplacian_sector(g, f, 0).values
    # symbolic: -Laplacian exp(-r^2) = (6 - 4 r^2) exp(-r^2) in d = 3
    exact = (6 - 4 * g.nodes ** 2) * np.exp(-g.nodes ** 2)
    assert np.max(np.abs(got - exact)) < 2e-2
    # the first-node value continues to the origin limit 6 as h -> 0
    fine = make_grid(3, 8.0, 1600, 1.0)
    got0 = laplacian_sector(fine, field_from_callable(
        fine, lambda r: np.exp(-r ** 2)), 0).values[0]
    assert abs(got0 - 6.0) < 3e-3


def test_laplacian_second_order_convergence():
    errs = []
    for n in (100, 200, 400):
        g = make_grid(3, 8.0, n, 1.0)
        f = field_from_callable(g, lambda r: np.exp(-r ** 2))
        exact = (6 - 4 * g.nodes ** 2) * np.exp(-g.nodes ** 2)
        errs.append(np.max(np.abs(laplacian_sector(g, f, 0).values - exact)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


@pytest.mark.parametrize("d", [3, 5])
def test_coordinate_function_harmonic(d):
    g = make_grid(d, 8.0, 100, 1.0)
    f = RadialField(g, g.nodes.copy())
    out = laplacian_sector(g, f, 1).values
    assert np.max(np.abs(out)) < 1e-10


def test_constants_harmonic():
    g = make_grid(4, 8.0, 100, 1.02)
    out = laplacian_sector(g, RadialField(g, np.ones(g.n)), 0).values
    assert np.max(np.abs(out)) < 1e-10


def test_laplacian_rejects_negative_sector():
    g = make_grid(3, 8.0, 64, 1.0)
    with pytest.raises(GridError):
        laplacian_sector(g, RadialField(g, np.ones(g.n)), -1)


def test_grid_mismatch_raises():
    g1 = make_grid(3, 8.0, 64, 1.0)
    g2 = make_grid(3, 9.0, 64, 1.0)
    f = RadialField(g2, np.ones(64))
    with pytest.raises(GridError):
        integrate_radial(g1, f)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("ell", [0, 1])
def test_weighted_symmetry(d, ell):
    g = make_grid(d, 20.0, 150, 1.02)
    M = sector_symmetric(g, ell)
    defect = np.max(np.abs(M - M.T)) / np.max(np.abs(M))
    assert defect < 1e-12


def test_differentiate_fourth_order():
    g = make_grid(3, 10.0, 400, 1.005)
    du = differentiate(g, np.exp(-g.nodes))
    assert np.max(np.abs(du + np.exp(-g.nodes))) < 1e-8


def test_params_validation_and_windows():
    with pytest.raises(ParameterError):
        ChoquardParams(3, 3.5, 2.0)
    with pytest.raises(ParameterError):
        ChoquardParams(3, 1.0, 0.5)
    with pytest.raises(ParameterError):
        ChoquardParams(0, 0.5, 2.0)
    par = ChoquardParams(3, 1.0, 2.0)
    assert par.in_existence_window  # 1/2 >= 1/2 > 1/5
    assert not ChoquardParams(3, 1.0, 1.2).in_existence_window  # p < 2
    assert not ChoquardParams(5, 1.0, 3.1).in_existence_window  # 3p > 9
    assert par.near_newtonian(0.0)
    assert ChoquardParams(3, 1.02, 2.02).near_newtonian(0.025)
    assert not ChoquardParams(3, 1.02, 2.02).near_newtonian(0.01)
    assert not ChoquardParams(3, 0.9, 2.0).near_newtonian(0.05)
    assert not ChoquardParams(3, 1.0, 1.99).near_newtonian(0.05)


def test_field_flags_and_roundtrip(tmp_path):
    g = make_grid(3, 10.0, 100, 1.0)
    f = field_from_callable(g, lambda r: np.exp(-r))
    assert f.is_radially_decreasing()
    f2 = RadialField(g, np.sin(g.nodes))
    assert not f2.is_radially_decreasing()

    path = tmp_path / "f.csv"
    f.to_csv(path)
    back = RadialField.from_csv(path, grid=g)
    assert_allclose(back.values, f.values, rtol=0, atol=0)

    env = f.to_json_envelope()
    data = json.loads(env)
    assert data["grid"] == {"d": 3, "n": 100, "r_max": 10.0, "stretch": 1.0}
    back2 = RadialField.from_json_envelope(env)
    assert_allclose(back2.values, f.values)
    assert back2.grid.same_layout(g)


def test_wrong_length_field():
    g = make_grid(3, 10.0, 100, 1.0)
    with pytest.raises(GridError):
        RadialField(g, np.ones(50))
