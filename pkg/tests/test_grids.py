import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasecontrol.errors import ConfigurationError, ShapeError
from phasecontrol.grids import (
    DIRICHLET,
    NEUMANN,
    Field,
    TimeField,
    build_grid,
    grad_norm_sq,
    inner_product,
    laplacian_apply,
    norm,
    time_antiderivative,
)


def test_build_grid_spacings():
    assert build_grid(1.0, 4, 10, 1.0).h == (0.25,)
    assert build_grid((1.0, 2.0), (4, 8), 10, 1.0).h == (0.25, 0.25)
    assert build_grid(1.0, 4, 10, 1.0).dt == pytest.approx(0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lengths=-1.0, n_cells=4, n_time_steps=10, t_final=1.0),
        dict(lengths=1.0, n_cells=1, n_time_steps=10, t_final=1.0),
        dict(lengths=1.0, n_cells=4, n_time_steps=0, t_final=1.0),
        dict(lengths=1.0, n_cells=4, n_time_steps=10, t_final=0.0),
        dict(lengths=(1.0, 1.0), n_cells=(4,), n_time_steps=10, t_final=1.0),
    ],
)
def test_build_grid_rejects_bad_config(kwargs):
    with pytest.raises(ConfigurationError):
        build_grid(**kwargs)


def test_node_budget_enforced():
    with pytest.raises(ConfigurationError):
        build_grid(1.0, 100, 100, 1.0, max_space_time_nodes=1000)


def test_laplacian_annihilates_constants_neumann():
    grid = build_grid(1.0, 16, 4, 1.0)
    f = Field.full(grid, NEUMANN, 3.7)
    assert np.abs(laplacian_apply(f).values).max() == 0.0


def test_laplacian_of_linear_field_neumann():
    # mirror ghosts: interior rows are exact, boundary rows see the kink
    grid = build_grid(1.0, 8, 4, 1.0)
    h = grid.h[0]
    f = Field.from_function(grid, NEUMANN, lambda x: x)
    lap = laplacian_apply(f).values
    assert np.abs(lap[1:-1]).max() < 1e-12
    assert lap[0] == pytest.approx(2.0 / h)
    assert lap[-1] == pytest.approx(-2.0 / h)


def test_laplacian_sine_convergence_order():
    errs = []
    hs = []
    for n in (16, 32, 64):
        grid = build_grid(1.0, n, 4, 1.0)
        x = grid.coords(DIRICHLET)[0]
        f = Field(grid, DIRICHLET, np.sin(np.pi * x))
        exact = -np.pi**2 * np.sin(np.pi * x)
        errs.append(np.abs(laplacian_apply(f).values - exact).max())
        hs.append(grid.h[0])
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 1.9


def test_inner_product_measures():
    grid = build_grid(1.0, 16, 4, 1.0)
    one_n = Field.full(grid, NEUMANN, 1.0)
    assert inner_product(one_n, one_n) == pytest.approx(1.0, abs=1e-14)
    one_d = Field.full(grid, DIRICHLET, 1.0)
    # interior-only quadrature misses one boundary cell: O(h)
    assert inner_product(one_d, one_d) == pytest.approx(1.0, abs=grid.h[0])
    assert inner_product(Field.zeros(grid, NEUMANN), one_n) == 0.0


def test_inner_product_rectangle_rule_x():
    grid = build_grid(1.0, 16, 4, 1.0)
    f = Field.from_function(grid, DIRICHLET, lambda x: x)
    g = Field.full(grid, DIRICHLET, 1.0)
    # frozen rectangle-rule value: h² · n(n-1)/2 with n = 16
    assert inner_product(f, g) == pytest.approx(0.46875, abs=1e-15)
    assert abs(inner_product(f, g) - 0.5) <= grid.h[0]


def test_inner_product_layout_mismatch():
    grid = build_grid(1.0, 16, 4, 1.0)
    with pytest.raises(ShapeError):
        inner_product(Field.zeros(grid, NEUMANN), Field.zeros(grid, DIRICHLET))


@pytest.mark.parametrize("kind", [DIRICHLET, NEUMANN])
@pytest.mark.parametrize("dims", [(1.0, None), ((1.0, 2.0), None)])
def test_discrete_green_identity(kind, dims):
    lengths = dims[0]
    cells = 12 if np.ndim(lengths) == 0 else (6, 8)
    grid = build_grid(lengths, cells, 3, 1.0)
    rng = np.random.default_rng(7)
    f = Field(grid, kind, rng.standard_normal(grid.n_nodes(kind)))
    g = Field(grid, kind, rng.standard_normal(grid.n_nodes(kind)))
    lhs = inner_product(laplacian_apply(f), g)
    rhs = inner_product(f, laplacian_apply(g))
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(lhs)))


def test_grad_norm_nonnegative():
    grid = build_grid(1.0, 16, 4, 1.0)
    rng = np.random.default_rng(3)
    for kind in (DIRICHLET, NEUMANN):
        f = Field(grid, kind, rng.standard_normal(grid.n_nodes(kind)))
        assert grad_norm_sq(f) >= 0.0
    assert grad_norm_sq(Field.full(grid, NEUMANN, 2.0)) == 0.0


def test_field_shape_validation():
    grid = build_grid(1.0, 16, 4, 1.0)
    with pytest.raises(ShapeError):
        Field(grid, DIRICHLET, np.zeros(grid.n_nodes(NEUMANN)))
    with pytest.raises(ShapeError):
        TimeField(grid, NEUMANN, np.zeros((2, grid.n_nodes(NEUMANN))))


def test_time_antiderivative_zero_and_constant():
    grid = build_grid(1.0, 4, 10, 1.0)
    zero = TimeField.zeros(grid, DIRICHLET)
    assert np.all(time_antiderivative(zero).values == 0.0)
    ones = TimeField.full(grid, DIRICHLET, 1.0)
    prim = time_antiderivative(ones)
    for n in range(11):
        assert prim.values[n, 0] == pytest.approx(0.1 * n, abs=1e-14)


def test_time_antiderivative_of_t():
    grid = build_grid(1.0, 4, 10, 1.0)
    v = TimeField.from_function(grid, DIRICHLET, lambda t, x: t + 0.0 * x)
    prim = time_antiderivative(v)
    # right-endpoint rectangle sum of t over ten 0.1-steps = 0.55
    assert prim.values[-1, 0] == pytest.approx(0.55, abs=1e-14)
    assert abs(prim.values[-1, 0] - 0.5) <= grid.dt


@settings(max_examples=25, deadline=None)
@given(
    coeffs=st.lists(
        st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=2, max_size=2
    )
)
def test_time_antiderivative_linear(coeffs):
    a, b = coeffs
    grid = build_grid(1.0, 4, 8, 1.0)
    rng = np.random.default_rng(11)
    v = TimeField(grid, DIRICHLET, rng.standard_normal((9, 3)))
    w = TimeField(grid, DIRICHLET, rng.standard_normal((9, 3)))
    combo = TimeField(grid, DIRICHLET, a * v.values + b * w.values)
    expect = a * time_antiderivative(v).values + b * time_antiderivative(w).values
    assert np.allclose(time_antiderivative(combo).values, expect, atol=1e-12)


def test_time_antiderivative_monotone_for_nonnegative():
    grid = build_grid(1.0, 4, 8, 1.0)
    rng = np.random.default_rng(13)
    v = TimeField(grid, DIRICHLET, np.abs(rng.standard_normal((9, 3))))
    prim = time_antiderivative(v).values
    assert np.all(np.diff(prim, axis=0) >= -1e-15)
