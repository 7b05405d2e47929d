"""Sensitivity solver: the state map differentiated in a control direction.

Around a computed base trajectory, a direction h produces (Θ, Φ) solving

    dΘ/dt - ΔΘ + ell*dΦ/dt = m h,
    dΦ/dt - ΔΦ + γ'(φ̄) Φ = ell*Θ,      Θ(0) = Φ(0) = 0,

stepped with the same implicit Euler scheme as the forward solve.  Because
γ' is frozen at the converged new-level base state, each step applies the
exact Newton Jacobian of the forward step, making this the exact derivative
of the discrete solution map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import NumericalError, ShapeError, UnsupportedPotentialError
from .grids import DIRICHLET, NEUMANN, TimeField, Trajectory
from .potentials import gamma_prime
from .state import StateProblem, StepOperators


@dataclass
class SensitivityPair:
    theta: TimeField
    phi: TimeField


def solve_linearized(
    problem: StateProblem, base: Trajectory, h: TimeField
) -> SensitivityPair:
    """Solve the linearized system around ``base`` for direction ``h``."""
    if not problem.potential.supports_derivatives:
        raise UnsupportedPotentialError(
            "the obstacle kind has no C² nonlinearity; sensitivities are undefined"
        )
    grid = problem.grid
    if h.kind != DIRICHLET:
        raise ShapeError("control directions live on the dirichlet layout")
    if base.phi.values.shape[0] != grid.n_time_steps + 1:
        raise ShapeError("base trajectory does not match the grid's time levels")

    ops = StepOperators(problem)
    dt = grid.dt
    ell = problem.ell
    big_theta = TimeField.zeros(grid, DIRICHLET)
    big_phi = TimeField.zeros(grid, NEUMANN)

    th = big_theta.values[0]
    ph = big_phi.values[0]
    for n in range(1, grid.n_time_steps + 1):
        matrix = ops.forward_matrix(
            np.asarray(gamma_prime(problem.potential, base.phi.values[n]))
        )
        rhs = np.concatenate(
            [
                th / dt + (ell / dt) * grid.restrict(ph) + ops.m_interior * h.values[n],
                ph / dt,
            ]
        )
        sol = spla.spsolve(matrix, rhs)
        if not np.all(np.isfinite(sol)):
            raise NumericalError(f"linearized solve failed at time level {n}")
        th = sol[: ops.n_d]
        ph = sol[ops.n_d :]
        big_theta.values[n] = th
        big_phi.values[n] = ph

    return SensitivityPair(big_theta, big_phi)
