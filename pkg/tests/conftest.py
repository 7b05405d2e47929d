import numpy as np
import pytest

from phasecontrol.grids import DIRICHLET, NEUMANN, Field, TimeField, build_grid
from phasecontrol.objective import ObjectiveSpec
from phasecontrol.potentials import PotentialSpec
from phasecontrol.state import NewtonSettings, StateProblem


def make_problem(
    kind="regular",
    n_cells=16,
    n_time=16,
    phi0=0.25,
    c=1.0,
    eps_yosida=None,
    ell=1.0,
    m_value=1.0,
):
    grid = build_grid(1.0, n_cells, n_time, 1.0)
    spec = PotentialSpec(kind, c=c, eps_yosida=eps_yosida)
    return StateProblem(
        grid,
        spec,
        ell,
        Field.full(grid, NEUMANN, m_value),
        Field.zeros(grid, DIRICHLET),
        Field.full(grid, NEUMANN, phi0),
    )


def slab_chi(grid):
    return TimeField.from_function(
        grid,
        NEUMANN,
        lambda t, x: 1.0 * ((x >= 0.25) & (x <= 0.75) & (t >= 0.25) & (t <= 0.75)),
    )


def make_objective(grid, kappa=0.5, eps_g=0.1, lambda_g=1e-3):
    return ObjectiveSpec(
        kappa, eps_g, lambda_g, slab_chi(grid), TimeField.zeros(grid, DIRICHLET)
    )


def wavy_control(grid):
    return TimeField.from_function(
        grid, DIRICHLET, lambda t, x: np.sin(np.pi * x) * np.cos(2.0 * t)
    )


def random_control_direction(grid, rng, scale=1.0):
    vals = rng.standard_normal((grid.n_time_steps + 1, grid.n_nodes(DIRICHLET)))
    vals[0] = 0.0
    return TimeField(grid, DIRICHLET, scale * vals)


@pytest.fixture
def newton():
    return NewtonSettings()
