import numpy as np
import pytest

from conftest import make_objective, make_problem
from phasecontrol.adjoint import AdjointPair
from phasecontrol.errors import ConfigurationError
from phasecontrol.grids import DIRICHLET, Field, TimeField, space_time_inner, space_time_norm
from phasecontrol.objective import ObjectiveSpec, g_value
from phasecontrol.optimizer import (
    AT_MAX,
    AT_MIN,
    UNDETERMINED,
    ControlBox,
    PGSettings,
    classify_bang_bang,
    optimize,
    project_box,
    projected_step,
)
from phasecontrol.state import NewtonSettings, solve_state


def test_project_box_clamps_and_is_idempotent():
    grid = make_problem().grid
    box = ControlBox.from_constants(grid, -1.0, 1.0)
    u = TimeField.full(grid, DIRICHLET, 10.0)
    proj = project_box(box, u)
    assert np.all(proj.values == 1.0)
    assert np.array_equal(project_box(box, proj).values, proj.values)
    inside = TimeField.full(grid, DIRICHLET, 0.3)
    assert np.array_equal(project_box(box, inside).values, inside.values)


def test_project_box_nonexpansive():
    grid = make_problem().grid
    box = ControlBox.from_constants(grid, -1.0, 1.0)
    rng = np.random.default_rng(29)
    shape = (grid.n_time_steps + 1, grid.n_nodes(DIRICHLET))
    for _ in range(10):
        u = TimeField(grid, DIRICHLET, 3.0 * rng.standard_normal(shape))
        v = TimeField(grid, DIRICHLET, 3.0 * rng.standard_normal(shape))
        du = space_time_norm(TimeField(grid, DIRICHLET, u.values - v.values))
        dp = space_time_norm(
            TimeField(
                grid, DIRICHLET, project_box(box, u).values - project_box(box, v).values
            )
        )
        assert dp <= du + 1e-12


def test_box_validation():
    grid = make_problem().grid
    with pytest.raises(ConfigurationError):
        ControlBox(TimeField.full(grid, DIRICHLET, 2.0), TimeField.full(grid, DIRICHLET, 1.0))


def test_zero_weight_converges_immediately(newton):
    problem = make_problem(m_value=0.0)
    grid = problem.grid
    objective = make_objective(grid)
    box = ControlBox.from_constants(grid, -2.0, 2.0)
    u0 = TimeField.full(grid, DIRICHLET, 0.5)
    result = optimize(problem, objective, box, PGSettings(max_iterations=10), u0, newton)
    assert result.status == "converged"
    assert len(result.history) == 1
    assert result.history[0].residual == 0.0
    assert np.array_equal(result.u.values, u0.values)


def test_matched_target_is_immediately_optimal(newton):
    problem = make_problem()
    grid = problem.grid
    box = ControlBox.from_constants(grid, -2.0, 2.0)
    u0 = box.midpoint()
    base = solve_state(problem, newton, u0)
    helper = make_objective(grid)
    objective = ObjectiveSpec(
        0.0,
        helper.eps_g,
        helper.lambda_g,
        TimeField(grid, "neumann", g_value(helper, base.phi.values)),
        helper.theta_q,
    )
    result = optimize(problem, objective, box, PGSettings(max_iterations=10), u0, newton)
    assert result.status == "converged"
    assert result.final_cost == pytest.approx(0.0, abs=1e-28)
    assert len(result.history) == 1


def test_projected_step_scaling_invariance(newton):
    # replacing the gradient by c*g with step s/c gives the identical iterate
    grid = make_problem().grid
    box = ControlBox.from_constants(grid, -1.0, 1.0)
    rng = np.random.default_rng(31)
    shape = (grid.n_time_steps + 1, grid.n_nodes(DIRICHLET))
    u = project_box(box, TimeField(grid, DIRICHLET, rng.standard_normal(shape)))
    g = TimeField(grid, DIRICHLET, rng.standard_normal(shape))
    c = 8.0  # power of two keeps the rescaling exact in floating point
    a = projected_step(box, u, g, 0.25)
    b = projected_step(box, u, TimeField(grid, DIRICHLET, c * g.values), 0.25 / c)
    assert np.array_equal(a.values, b.values)
    c = 7.3
    b = projected_step(box, u, TimeField(grid, DIRICHLET, c * g.values), 0.25 / c)
    assert np.allclose(a.values, b.values, atol=1e-14)


@pytest.fixture(scope="module")
def small_run():
    problem = make_problem(n_cells=24, n_time=24)
    grid = problem.grid
    objective = make_objective(grid, kappa=0.0)
    box = ControlBox.from_constants(grid, -5.0, 5.0)
    settings = PGSettings(step0=2e5, max_iterations=150, tol_stationarity=1e-5)
    result = optimize(problem, objective, box, settings, None, NewtonSettings())
    return problem, objective, box, settings, result


def test_optimize_monotone_and_feasible(small_run):
    problem, objective, box, settings, result = small_run
    costs = [r.cost for r in result.history]
    assert all(costs[i + 1] <= costs[i] + 1e-14 for i in range(len(costs) - 1))
    assert np.all(result.u.values >= box.u_min.values)
    assert np.all(result.u.values <= box.u_max.values)
    assert result.status == "converged"
    assert result.final_residual <= settings.tol_stationarity * (1 + abs(result.final_cost))


def test_variational_inequality_at_solution(small_run):
    problem, objective, box, settings, result = small_run
    grid = problem.grid
    grad = result.gradient
    rng = np.random.default_rng(37)
    shape = result.u.values.shape
    floor = -10.0 * settings.tol_stationarity
    for _ in range(1000):
        span = box.u_max.values - box.u_min.values
        u_rand = box.u_min.values + span * rng.random(shape)
        diff = TimeField(grid, DIRICHLET, u_rand - result.u.values)
        value = space_time_inner(grad, diff)
        assert value >= floor * space_time_norm(diff)


def test_classify_bang_bang_synthetic():
    problem = make_problem(n_cells=8, n_time=4)
    grid = problem.grid
    box = ControlBox.from_constants(grid, -1.0, 1.0)
    n_d = grid.n_nodes(DIRICHLET)
    p = TimeField.zeros(grid, DIRICHLET)
    q = TimeField.zeros(grid, "neumann")
    p.values[:, :] = 0.5  # positive switching value at every aligned level
    adj = AdjointPair(p, q)

    u = TimeField.full(grid, DIRICHLET, -1.0)  # at the lower bound, as required
    report = classify_bang_bang(box, u, adj, problem, tol_p=1e-8)
    assert np.all(report.labels[1:] == AT_MIN)
    assert report.n_violations == 0

    u_bad = TimeField.full(grid, DIRICHLET, 0.0)
    report = classify_bang_bang(box, u_bad, adj, problem, tol_p=1e-8)
    assert report.violation_fraction == 1.0

    no_weight = make_problem(n_cells=8, n_time=4, m_value=0.0)
    report = classify_bang_bang(box, u, adj, no_weight, tol_p=1e-8)
    assert np.all(report.labels == UNDETERMINED)
    assert report.n_classified == 0 and report.violation_fraction == 0.0


def test_classify_includes_at_max():
    problem = make_problem(n_cells=8, n_time=4)
    grid = problem.grid
    box = ControlBox.from_constants(grid, -1.0, 1.0)
    p = TimeField.zeros(grid, DIRICHLET)
    p.values[:, :] = -0.5
    adj = AdjointPair(p, TimeField.zeros(grid, "neumann"))
    u = TimeField.full(grid, DIRICHLET, 1.0)
    report = classify_bang_bang(box, u, adj, problem, tol_p=1e-8)
    assert np.all(report.labels[1:] == AT_MAX)
    assert report.n_violations == 0


def test_line_search_exhaustion_stalls(newton):
    problem = make_problem(n_cells=12, n_time=12)
    grid = problem.grid
    objective = make_objective(grid, kappa=0.0)
    box = ControlBox.from_constants(grid, -100.0, 100.0)
    settings = PGSettings(step0=1e12, max_backtracks=0, max_iterations=5)
    result = optimize(problem, objective, box, settings, None, newton)
    assert result.status == "stalled"
    assert len(result.history) >= 1
