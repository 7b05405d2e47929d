"""Projected gradient descent over the admissible control box.

Iterates u <- P(u - s * m p) with Armijo backtracking on the step size and
the projected-gradient residual ||u - P(u - s0 * m p)|| as stationarity
measure.  The first-order necessary condition the stopping test realizes is
the variational inequality <m p, u - u*> >= 0 over the box, whose pointwise
form pins the optimal control to a bound wherever the switching function
m p is nonzero (bang-bang structure).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import AdjointPair, gradient_from_adjoint, solve_adjoint, switching_values
from .errors import ConfigurationError, ShapeError
from .grids import DIRICHLET, Field, TimeField, Trajectory, space_time_norm
from .objective import ObjectiveSpec, eval_cost
from .state import NewtonSettings, StateProblem, solve_state

AT_MIN = -1
UNDETERMINED = 0
AT_MAX = 1


@dataclass
class ControlBox:
    u_min: TimeField
    u_max: TimeField

    def __post_init__(self):
        if self.u_min.kind != DIRICHLET or self.u_max.kind != DIRICHLET:
            raise ShapeError("control bounds live on the dirichlet layout")
        if self.u_min.values.shape != self.u_max.values.shape:
            raise ShapeError("control bounds have mismatched shapes")
        if not (
            np.all(np.isfinite(self.u_min.values))
            and np.all(np.isfinite(self.u_max.values))
        ):
            raise ConfigurationError("control bounds must be finite")
        if np.any(self.u_min.values > self.u_max.values):
            raise ConfigurationError("u_min must not exceed u_max anywhere")

    @classmethod
    def from_constants(cls, grid, lo: float, hi: float) -> "ControlBox":
        return cls(TimeField.full(grid, DIRICHLET, lo), TimeField.full(grid, DIRICHLET, hi))

    def midpoint(self) -> TimeField:
        return TimeField(
            self.u_min.grid, DIRICHLET, 0.5 * (self.u_min.values + self.u_max.values)
        )


@dataclass
class PGSettings:
    step0: float = 1.0
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    max_iterations: int = 200
    tol_stationarity: float = 1e-6
    tol_p: float = 1e-8

    def __post_init__(self):
        positive = (
            self.step0,
            self.armijo_slope,
            self.backtrack_factor,
            self.max_iterations,
            self.tol_stationarity,
            self.tol_p,
        )
        if any(v <= 0 for v in positive) or self.max_backtracks < 0:
            raise ConfigurationError("all projected-gradient settings must be positive")
        if not self.armijo_slope < 1:
            raise ConfigurationError("Armijo slope must lie in (0, 1)")


def project_box(box: ControlBox, u: TimeField) -> TimeField:
    """Pointwise clamp onto [u_min, u_max]."""
    if u.values.shape != box.u_min.values.shape:
        raise ShapeError("control does not match the box shape")
    return TimeField(
        u.grid, u.kind, np.clip(u.values, box.u_min.values, box.u_max.values)
    )


def projected_step(box: ControlBox, u: TimeField, grad: TimeField, step: float) -> TimeField:
    return project_box(box, TimeField(u.grid, u.kind, u.values - step * grad.values))


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    interface_cost: float
    temperature_cost: float
    residual: float
    step_size: float
    backtracks: int
    newton_iterations: int


@dataclass
class OptimizeResult:
    u: TimeField
    history: list[IterationRecord]
    status: str
    trajectory: Trajectory
    adjoint: AdjointPair
    gradient: TimeField

    @property
    def final_cost(self) -> float:
        return self.history[-1].cost

    @property
    def final_residual(self) -> float:
        return self.history[-1].residual


def optimize(
    problem: StateProblem,
    objective: ObjectiveSpec,
    box: ControlBox,
    settings: PGSettings,
    u_init: TimeField | None = None,
    newton: NewtonSettings | None = None,
) -> OptimizeResult:
    """Run projected gradient descent from u_init (box midpoint by default)."""
    newton = newton or NewtonSettings()
    u = project_box(box, u_init) if u_init is not None else box.midpoint()

    traj = solve_state(problem, newton, u)
    cost = eval_cost(objective, traj)
    history: list[IterationRecord] = []
    status = "running"
    step_used = 0.0
    backtracks_used = 0

    for iteration in range(settings.max_iterations):
        adj = solve_adjoint(problem, traj, objective)
        grad = gradient_from_adjoint(problem, adj)
        residual = space_time_norm(
            TimeField(
                u.grid,
                u.kind,
                u.values - projected_step(box, u, grad, settings.step0).values,
            )
        )
        history.append(
            IterationRecord(
                iteration,
                cost.total,
                cost.interface,
                cost.temperature,
                residual,
                step_used,
                backtracks_used,
                sum(traj.newton_iterations),
            )
        )
        if residual <= settings.tol_stationarity * (1.0 + abs(cost.total)):
            status = "converged"
            break

        step = settings.step0
        accepted = False
        for backtracks_used in range(settings.max_backtracks + 1):
            u_trial = projected_step(box, u, grad, step)
            move = space_time_norm(
                TimeField(u.grid, u.kind, u_trial.values - u.values)
            )
            traj_trial = solve_state(problem, newton, u_trial)
            cost_trial = eval_cost(objective, traj_trial)
            if cost_trial.total <= cost.total - settings.armijo_slope / step * move**2:
                accepted = True
                break
            step *= settings.backtrack_factor
        if not accepted:
            status = "stalled"
            break
        u, traj, cost, step_used = u_trial, traj_trial, cost_trial, step
    else:
        status = "max_iterations"

    adj = solve_adjoint(problem, traj, objective)
    grad = gradient_from_adjoint(problem, adj)
    if status == "max_iterations":
        # close the history with the last accepted iterate
        residual = space_time_norm(
            TimeField(
                u.grid,
                u.kind,
                u.values - projected_step(box, u, grad, settings.step0).values,
            )
        )
        history.append(
            IterationRecord(
                settings.max_iterations,
                cost.total,
                cost.interface,
                cost.temperature,
                residual,
                step_used,
                backtracks_used,
                sum(traj.newton_iterations),
            )
        )
        if residual <= settings.tol_stationarity * (1.0 + abs(cost.total)):
            status = "converged"
    return OptimizeResult(u, history, status, traj, adj, grad)


@dataclass
class BangBangReport:
    labels: np.ndarray
    n_classified: int
    n_violations: int
    violation_fraction: float


def classify_bang_bang(
    box: ControlBox,
    u: TimeField,
    adj: AdjointPair,
    problem: StateProblem,
    tol_p: float = 1e-8,
    tol_u: float = 1e-6,
) -> BangBangReport:
    """Label every control node per the first-order switching law.

    Nodes with positive weight m and switching value p beyond tol_p must sit
    at the matching bound; the remainder are undetermined.  The violation
    fraction counts classified nodes whose control is farther than tol_u
    from the predicted bound.
    """
    grid = u.grid
    m_int = grid.restrict(problem.m.values)
    p_aligned = switching_values(problem, adj).values

    labels = np.zeros_like(u.values, dtype=int)
    active = (m_int[None, :] > 0.0) & (np.arange(u.values.shape[0])[:, None] >= 1)
    labels[active & (p_aligned > tol_p)] = AT_MIN
    labels[active & (p_aligned < -tol_p)] = AT_MAX

    at_min = labels == AT_MIN
    at_max = labels == AT_MAX
    violations = int(
        np.sum(np.abs(u.values[at_min] - box.u_min.values[at_min]) > tol_u)
    ) + int(np.sum(np.abs(u.values[at_max] - box.u_max.values[at_max]) > tol_u))
    n_classified = int(np.sum(at_min) + np.sum(at_max))
    fraction = violations / n_classified if n_classified else 0.0
    return BangBangReport(labels, n_classified, violations, fraction)
