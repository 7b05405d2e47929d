"""Backward-in-time adjoint solver and the discrete cost gradient.

The adjoint recursion is the exact transpose (in the quadrature-weighted
inner products) of the linearized forward stepping, so the assembled
gradient satisfies the discrete duality identity

    <m·p, h>_Q = kappa <θ*-θ_q, Θ>_Q + <(g(φ*)-chi) g'(φ*), Φ>_Q

for every direction h up to linear-solver accuracy.  As the step size
vanishes the recursion is consistent with the continuous system

    -dp/dt - Δp - ell*q = kappa (θ*-θ_q),
    -dq/dt - Δq + γ'(φ*) q - ell*dp/dt = (g(φ*)-chi) g'(φ*),
    p(T) = q(T) = 0.

Level k of the stored pair multiplies the step from level k to k+1: the
terminal level is exactly zero, and the gradient at control level n reads
the adjoint at level n-1.  Sources are sampled at the state levels 1..N,
mirroring the cost quadrature exactly; any mismatch there is caught by the
duality audit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import NumericalError, ShapeError, UnsupportedPotentialError
from .grids import DIRICHLET, NEUMANN, TimeField, Trajectory
from .objective import ObjectiveSpec, g_prime, g_value
from .potentials import gamma_prime
from .state import StateProblem, StepOperators


@dataclass
class AdjointPair:
    p: TimeField
    q: TimeField


def solve_adjoint(
    problem: StateProblem, base: Trajectory, objective: ObjectiveSpec
) -> AdjointPair:
    """March the transposed per-step systems from the final time to zero."""
    if not problem.potential.supports_derivatives:
        raise UnsupportedPotentialError(
            "the obstacle kind has no C² nonlinearity; adjoint gradients are undefined"
        )
    grid = problem.grid
    if objective.chi.values.shape != base.phi.values.shape:
        raise ShapeError("chi does not match the trajectory's time levels")

    ops = StepOperators(problem)
    dt = grid.dt
    ell = problem.ell
    p = TimeField.zeros(grid, DIRICHLET)
    q = TimeField.zeros(grid, NEUMANN)

    p_next = p.values[grid.n_time_steps]
    q_next = q.values[grid.n_time_steps]
    for n in range(grid.n_time_steps, 0, -1):
        phi_n = base.phi.values[n]
        source_theta = objective.kappa * (base.theta.values[n] - objective.theta_q.values[n])
        source_phi = (g_value(objective, phi_n) - objective.chi.values[n]) * g_prime(
            objective, phi_n
        )
        matrix = ops.adjoint_matrix(np.asarray(gamma_prime(problem.potential, phi_n)))
        rhs = np.concatenate(
            [
                source_theta + p_next / dt,
                source_phi + q_next / dt + (ell / dt) * grid.extend(p_next),
            ]
        )
        sol = spla.spsolve(matrix, rhs)
        if not np.all(np.isfinite(sol)):
            raise NumericalError(f"adjoint solve failed at time level {n}")
        p.values[n - 1] = sol[: ops.n_d]
        q.values[n - 1] = sol[ops.n_d :]
        p_next = p.values[n - 1]
        q_next = q.values[n - 1]

    return AdjointPair(p, q)


def gradient_from_adjoint(problem: StateProblem, adj: AdjointPair) -> TimeField:
    """Pointwise switching field m·p aligned with the control levels.

    The value driving the control at level n is the adjoint stored at level
    n-1 (the multiplier of the step ending at n); level 0 carries no control
    and is left zero.  Quadrature weights are applied only inside inner
    products, so the result is a plain pointwise field.
    """
    grid = problem.grid
    m_int = grid.restrict(problem.m.values)
    out = TimeField.zeros(grid, DIRICHLET)
    out.values[1:] = m_int[None, :] * adj.p.values[:-1]
    return out


def switching_values(problem: StateProblem, adj: AdjointPair) -> TimeField:
    """Adjoint p aligned with control levels (no m factor), for bang-bang tests."""
    grid = problem.grid
    out = TimeField.zeros(grid, DIRICHLET)
    out.values[1:] = adj.p.values[:-1]
    return out
