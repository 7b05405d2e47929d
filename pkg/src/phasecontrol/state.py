"""Forward solver for the coupled temperature/order-parameter system

    dθ/dt - Δθ + ell*dφ/dt = m u          (zero Dirichlet data)
    dφ/dt - Δφ + β(φ) + π(φ) = ell*θ      (zero flux)

discretized with fully implicit Euler in time.  Each step solves the
stacked nonlinear system for (θ, φ) at the new level with a monolithic
Newton iteration, so the whole time march is a smooth map of the control
and the discrete adjoint is its exact transpose.

An optional extra right-hand side in the φ equation exists purely for
manufactured-solution verification and is zero in every production run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, ShapeError, StepFailureError
from .grids import DIRICHLET, NEUMANN, Field, Grid, TimeField, Trajectory
from .potentials import (
    OBSTACLE,
    PotentialSpec,
    beta_hat,
    gamma_prime,
    gamma_value,
    pi_value,
)


@dataclass
class NewtonSettings:
    tol_residual: float = 1e-10
    max_iter: int = 50
    damping: float = 0.5
    max_backtracks: int = 30
    domain_guard: float = 0.9

    def __post_init__(self):
        if self.tol_residual <= 0 or self.max_iter < 1:
            raise ConfigurationError("Newton tolerance/max_iter out of range")
        if not 0 < self.damping < 1 or not 0 < self.domain_guard <= 1:
            raise ConfigurationError("Newton damping/guard factors out of range")


@dataclass
class StateProblem:
    grid: Grid
    potential: PotentialSpec
    ell: float
    m: Field
    theta0: Field
    phi0: Field
    mms_source_phi: TimeField | None = None

    def __post_init__(self):
        if self.ell <= 0:
            raise ConfigurationError("latent-heat coefficient ell must be positive")
        if self.m.kind != NEUMANN or self.phi0.kind != NEUMANN:
            raise ShapeError("m and phi0 must live on the neumann layout")
        if self.theta0.kind != DIRICHLET:
            raise ShapeError("theta0 must live on the dirichlet layout")
        if np.any(self.m.values < 0):
            raise ConfigurationError("control weight m must be nonnegative")
        lo, hi = self.potential.domain
        margin = self.potential.domain_margin
        if self.potential.kind != OBSTACLE:
            vals = self.phi0.values
            if np.any(vals <= lo + margin) or np.any(vals >= hi - margin):
                raise ConfigurationError(
                    "phi0 must stay strictly inside the potential domain "
                    f"({lo}, {hi}) with margin {margin}"
                )
        if not np.all(np.isfinite(beta_hat(self.potential, self.phi0.values))):
            raise ConfigurationError("the convex potential part is not finite at phi0")
        if self.mms_source_phi is not None and self.mms_source_phi.kind != NEUMANN:
            raise ShapeError("the manufactured source must live on the neumann layout")


class StepOperators:
    """Constant sparse blocks of the per-step systems, built once per solve.

    The Jacobian of one implicit step with respect to the new level is

        [ I/dt - L_D      (ell/dt) R          ]
        [ -ell E          I/dt - L_N + γ'(φ) ]

    where R restricts full-grid vectors to interior nodes and E = Rᵀ extends
    by zero.  Only the γ' diagonal changes between assemblies.
    """

    def __init__(self, problem: StateProblem):
        grid = problem.grid
        dt = grid.dt
        ell = problem.ell
        self.grid = grid
        self.ell = ell
        self.n_d = grid.n_nodes(DIRICHLET)
        self.n_n = grid.n_nodes(NEUMANN)
        self.lap_d = grid.laplacian(DIRICHLET)
        self.lap_n = grid.laplacian(NEUMANN)
        self.restrict = grid.restriction_matrix
        self.extend = self.restrict.T.tocsr()
        eye_d = sp.identity(self.n_d, format="csr")
        eye_n = sp.identity(self.n_n, format="csr")
        self.block_theta = (eye_d / dt - self.lap_d).tocsr()
        self.block_phi_base = (eye_n / dt - self.lap_n).tocsr()
        self.coupling_fwd = (ell / dt) * self.restrict
        self.coupling_back = (-ell) * self.extend
        self.m_interior = grid.restrict(problem.m.values)
        # assembling block matrices dominates the runtime, so both system
        # templates are built once and only the γ' diagonal is rewritten
        self._fwd = _DiagonalTemplate(
            sp.bmat(
                [
                    [self.block_theta, self.coupling_fwd],
                    [self.coupling_back, self.block_phi_base],
                ],
                format="csc",
            ),
            self.n_d,
        )
        self._adj = _DiagonalTemplate(
            sp.bmat(
                [
                    [self.block_theta, (-ell) * self.restrict],
                    [(ell / dt) * self.extend, self.block_phi_base],
                ],
                format="csc",
            ),
            self.n_d,
        )

    def forward_matrix(self, gamma_prime_values: np.ndarray) -> sp.csc_matrix:
        return self._fwd.with_diagonal(gamma_prime_values)

    def adjoint_matrix(self, gamma_prime_values: np.ndarray) -> sp.csc_matrix:
        """Adjoint of forward_matrix in the weighted inner products.

        The Laplacians and the γ' diagonal are self-adjoint there, so only
        the coupling blocks swap (R ↔ E with the scalar factors exchanged).
        """
        return self._adj.with_diagonal(gamma_prime_values)


class _DiagonalTemplate:
    """CSC matrix whose trailing diagonal block can be updated in place."""

    def __init__(self, template: sp.csc_matrix, start: int):
        template.sort_indices()
        self.shape = template.shape
        self.data = template.data
        self.indices = template.indices
        self.indptr = template.indptr
        pos = np.empty(template.shape[0] - start, dtype=np.int64)
        for k, j in enumerate(range(start, template.shape[0])):
            lo, hi = template.indptr[j], template.indptr[j + 1]
            offset = np.searchsorted(template.indices[lo:hi], j)
            if template.indices[lo + offset] != j:
                raise AssertionError("template is missing a diagonal entry")
            pos[k] = lo + offset
        self._diag_pos = pos

    def with_diagonal(self, extra_diagonal: np.ndarray) -> sp.csc_matrix:
        data = self.data.copy()
        data[self._diag_pos] += extra_diagonal
        out = sp.csc_matrix(
            (data, self.indices, self.indptr), shape=self.shape, copy=False
        )
        out.has_sorted_indices = True
        return out


def _sparse_solve(matrix: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    out = spla.spsolve(matrix, rhs)
    if not np.all(np.isfinite(out)):
        raise StepFailureError("linear solve produced non-finite values")
    return out


def _guard_fraction(phi, dphi, spec: PotentialSpec, guard: float) -> float:
    """Largest safe fraction of a Newton step for domain-constrained kinds."""
    lo, hi = spec.domain
    if spec.kind == OBSTACLE or (lo == -math.inf and hi == math.inf):
        return 1.0
    margin = 2.0 * spec.domain_margin
    cap = 1.0
    if math.isfinite(hi):
        up = dphi > 0
        if np.any(up):
            cap = min(cap, float(np.min(((hi - margin) - phi[up]) / dphi[up])))
    if math.isfinite(lo):
        dn = dphi < 0
        if np.any(dn):
            cap = min(cap, float(np.min(((lo + margin) - phi[dn]) / dphi[dn])))
    if cap >= 1.0:
        return 1.0
    return guard * max(cap, 0.0)


def step_state(
    problem: StateProblem,
    settings: NewtonSettings,
    theta_n: Field,
    phi_n: Field,
    u_n1: Field,
    t_index: int,
    ops: StepOperators | None = None,
):
    """Advance one implicit Euler step; returns (theta, phi, xi, iterations)."""
    if ops is None:
        ops = StepOperators(problem)
    grid = problem.grid
    dt = grid.dt
    ell = problem.ell
    spec = problem.potential
    if u_n1.kind != DIRICHLET:
        raise ShapeError("controls live on the dirichlet layout")

    th_old = theta_n.values
    ph_old = phi_n.values
    ph_old_i = grid.restrict(ph_old)
    forcing = ops.m_interior * u_n1.values
    source = (
        problem.mms_source_phi.values[t_index]
        if problem.mms_source_phi is not None
        else 0.0
    )

    def residual(th, ph):
        r1 = (
            (th - th_old) / dt
            - ops.lap_d @ th
            + (ell / dt) * (grid.restrict(ph) - ph_old_i)
            - forcing
        )
        r2 = (
            (ph - ph_old) / dt
            - ops.lap_n @ ph
            + gamma_value(spec, ph)
            - ell * grid.extend(th)
            - source
        )
        return r1, r2

    th = th_old.copy()
    ph = ph_old.copy()
    r1, r2 = residual(th, ph)
    res_norm = max(np.max(np.abs(r1)), np.max(np.abs(r2)))

    for iteration in range(settings.max_iter):
        if res_norm <= settings.tol_residual:
            xi = gamma_value(spec, ph) - pi_value(spec, ph)
            return Field(grid, DIRICHLET, th), Field(grid, NEUMANN, ph), Field(
                grid, NEUMANN, xi
            ), iteration

        matrix = ops.forward_matrix(np.asarray(gamma_prime(spec, ph)))
        delta = _sparse_solve(matrix, -np.concatenate([r1, r2]))
        dth = delta[: ops.n_d]
        dph = delta[ops.n_d :]

        alpha = _guard_fraction(ph, dph, spec, settings.domain_guard)
        if alpha <= 1e-14:
            raise StepFailureError(
                "domain guard stalled against the potential boundary",
                time_index=t_index,
                residual=res_norm,
            )
        accepted = False
        for _ in range(settings.max_backtracks + 1):
            th_try = th + alpha * dth
            ph_try = ph + alpha * dph
            r1, r2 = residual(th_try, ph_try)
            new_norm = max(np.max(np.abs(r1)), np.max(np.abs(r2)))
            if new_norm <= (1.0 - 1e-4 * alpha) * res_norm:
                accepted = True
                break
            alpha *= settings.damping
        if not accepted:
            raise StepFailureError(
                f"Newton backtracking exhausted at step {t_index} "
                f"(residual {res_norm:.3e})",
                time_index=t_index,
                residual=res_norm,
            )
        th, ph, res_norm = th_try, ph_try, new_norm

    raise StepFailureError(
        f"Newton did not reach tolerance {settings.tol_residual:.1e} at step "
        f"{t_index} (residual {res_norm:.3e})",
        time_index=t_index,
        residual=res_norm,
    )


def solve_state(
    problem: StateProblem, settings: NewtonSettings, u: TimeField
) -> Trajectory:
    """March the state system over all time levels for the given control."""
    grid = problem.grid
    if u.kind != DIRICHLET:
        raise ShapeError("controls live on the dirichlet layout")
    if u.values.shape[0] != grid.n_time_steps + 1:
        raise ShapeError("control must be defined on every time level")

    ops = StepOperators(problem)
    n_levels = grid.n_time_steps + 1
    theta = TimeField.zeros(grid, DIRICHLET)
    phi = TimeField.zeros(grid, NEUMANN)
    xi = TimeField.zeros(grid, NEUMANN)
    theta.values[0] = problem.theta0.values
    phi.values[0] = problem.phi0.values
    xi.values[0] = gamma_value(problem.potential, problem.phi0.values) - pi_value(
        problem.potential, problem.phi0.values
    )

    iterations = []
    th = problem.theta0
    ph = problem.phi0
    for n in range(1, n_levels):
        th, ph, xi_n, iters = step_state(
            problem, settings, th, ph, u.level(n), n, ops=ops
        )
        theta.values[n] = th.values
        phi.values[n] = ph.values
        xi.values[n] = xi_n.values
        iterations.append(iters)

    return Trajectory(theta, phi, xi, iterations)
