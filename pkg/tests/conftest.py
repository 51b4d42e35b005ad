import pytest

from choquard_lab import (ChoquardParams, make_grid, solve_choquard,
                          solve_model, solver_grid)


@pytest.fixture(scope="session")
def state_312():
    grid = solver_grid(3, 25.0, 700)
    return solve_choquard(ChoquardParams(3, 1.0, 2.0), grid)


@pytest.fixture(scope="session")
def state_312_coarse():
    grid = solver_grid(3, 25.0, 400)
    return solve_choquard(ChoquardParams(3, 1.0, 2.0), grid)


@pytest.fixture(scope="session")
def state_model_d1_p3():
    grid = make_grid(1, 15.0, 1200, 1.0)
    return solve_model(1, 3.0, grid)
