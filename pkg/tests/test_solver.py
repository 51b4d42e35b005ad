import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard_lab import (ChoquardParams, ConvergenceError, FitError,
                          GroundState, ModelParams, ParameterError,
                          RadialField, SolverOptions, fit_decay, make_grid,
                          model_soliton, solve_choquard, solve_model,
                          solver_grid, state_from_field)


def test_model_d1_matches_soliton_family(state_model_d1_p3):
    st = state_model_d1_p3
    grid = st.grid
    mask = grid.nodes <= 10.0
    exact = model_soliton(3.0, grid.nodes)
    # closed form solves the ODE: amp = sqrt(2), Q = sqrt(2) sech(r)
    assert_allclose(model_soliton(3.0, np.array([0.0]))[0], np.sqrt(2.0),
                    rtol=1e-15)
    assert np.max(np.abs(st.field.values[mask] - exact[mask])) <= 1e-5
    assert st.residual <= 1e-10


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_model_d1_other_exponents(p):
    grid = make_grid(1, 15.0, 1200, 1.0)
    st = solve_model(1, p, grid)
    exact = model_soliton(p, grid.nodes)
    mask = grid.nodes <= 10.0
    assert np.max(np.abs(st.field.values[mask] - exact[mask])) <= 1e-5


def test_model_p2_center_value():
    grid = make_grid(1, 15.0, 1500, 1.0)
    st = solve_model(1, 2.0, grid)
    # Q(r) = (3/2) sech^2(r/2), Q(0) = 3/2
    q0 = model_soliton(2.0, np.array([grid.nodes[0]]))[0]
    assert abs(st.field.values[0] - q0) <= 1e-6


def test_model_d3_identity_ratio():
    grid = solver_grid(3, 25.0, 900)
    # the sup-norm residual floor scales like roundoff/h0^2; 1e-9 is
    # comfortably above it on this stretched grid
    st = solve_model(3, 3.0, grid, SolverOptions(tol=1e-9))
    ratio = (st.norms["grad_L2"] / st.norms["L2"]) ** 2
    assert abs(ratio - 3.0) <= 1e-3  # d(p-1)/((d+2)-p(d-2)) = 6/2


def test_model_rejects_supercritical():
    grid = solver_grid(3, 20.0, 300)
    with pytest.raises(ParameterError):
        solve_model(3, 5.0, grid)
    with pytest.raises(ParameterError):
        ModelParams(4, 3.0)
    ModelParams(2, 7.0)  # any p > 1 fine for d <= 2


def test_choquard_312_ratio(state_312):
    st = state_312
    ratio = (st.norms["grad_L2"] / st.norms["L2"]) ** 2
    assert abs(ratio - 1.0 / 3.0) <= 1e-3
    assert st.residual <= 1e-10


def test_choquard_322_ratio():
    grid = solver_grid(3, 25.0, 800)
    st = solve_choquard(ChoquardParams(3, 2.0, 2.0), grid)
    ratio = (st.norms["grad_L2"] / st.norms["L2"]) ** 2
    assert abs(ratio - 1.0) <= 1e-3


def test_profile_invariants(state_312):
    vals = state_312.field.values
    assert np.all(vals > 0)
    assert state_312.field.is_radially_decreasing(tol=1e-12 * vals.max())


def test_window_violation_raises():
    with pytest.raises(ParameterError):
        solve_choquard(ChoquardParams(3, 1.0, 1.5), solver_grid(3, 20.0, 300))
    with pytest.raises(ParameterError):  # 1/p <= (d-2)/(2d-alpha)
        solve_choquard(ChoquardParams(5, 1.0, 3.5), solver_grid(5, 20.0, 300))


def test_nonconvergence_reports_residual():
    grid = solver_grid(3, 25.0, 300)
    opts = SolverOptions(tol=1e-10, max_iter=3, newton_polish=False)
    with pytest.raises(ConvergenceError) as err:
        solve_choquard(ChoquardParams(3, 1.0, 2.0), grid, opts)
    assert err.value.last_residual is not None
    assert err.value.last_residual > 0


def test_grid_refinement_stability():
    s1 = solve_choquard(ChoquardParams(3, 1.0, 2.0), solver_grid(3, 25.0, 400))
    s2 = solve_choquard(ChoquardParams(3, 1.0, 2.0), solver_grid(3, 25.0, 800))
    assert abs(s1.norms["L2"] - s2.norms["L2"]) / s2.norms["L2"] <= 1e-3


def test_rmax_doubling_stability():
    # uniform grids with identical spacing isolate the truncation effect
    s1 = solve_choquard(ChoquardParams(3, 1.0, 2.0),
                        make_grid(3, 25.0, 500, 1.0))
    s2 = solve_choquard(ChoquardParams(3, 1.0, 2.0),
                        make_grid(3, 50.0, 1000, 1.0))
    assert abs(s1.norms["L2"] - s2.norms["L2"]) / s2.norms["L2"] <= 1e-6


def test_h1_floor(state_312):
    assert state_312.norms["H1"] >= 0.01


def test_decay_fit_model(state_model_d1_p3):
    fit = state_model_d1_p3.decay
    assert fit is not None
    assert abs(fit.gamma - 1.0) <= 0.01
    assert fit.beta == 0.0


def test_decay_fit_choquard(state_312):
    assert state_312.decay is not None
    assert state_312.decay.gamma >= 0.48
    assert state_312.decay.beta == 1.0  # (d-1)/2 at d = 3


def test_decay_fit_rejects_degenerate_tail():
    grid = make_grid(1, 15.0, 1000, 1.0)
    vals = np.where(grid.nodes < 2.0, 1.0, 0.0) * np.exp(-grid.nodes)
    state = state_from_field(ModelParams(1, 3.0), RadialField(grid, vals))
    with pytest.raises(FitError):
        fit_decay(state, window=(8.0, 12.0))


def test_state_roundtrip(tmp_path, state_model_d1_p3):
    state_model_d1_p3.save(tmp_path / "Q")
    back = GroundState.load(tmp_path / "Q")
    assert back.equation == "model"
    assert back.params == state_model_d1_p3.params
    assert_allclose(back.field.values, state_model_d1_p3.field.values)
    assert back.norms == pytest.approx(state_model_d1_p3.norms)


def test_flow_method_also_converges():
    grid = solver_grid(3, 25.0, 300)
    opts = SolverOptions(method="flow", max_iter=4000)
    st = solve_choquard(ChoquardParams(3, 1.0, 2.0), grid, opts)
    assert st.residual <= opts.tol
