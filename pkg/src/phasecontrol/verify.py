"""Independent oracles and runtime audits.

Everything here checks the solvers from the outside: finite differences
against the adjoint gradient, the discrete duality identity, the energy
balance of the implicit scheme, continuous dependence on the control,
Yosida continuation for the obstacle kind, and manufactured-solution
convergence orders.  The oracles never share code paths with what they
check; in particular the finite-difference quotient only ever calls the
forward solver and the cost.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .adjoint import gradient_from_adjoint, solve_adjoint
from .errors import ConfigurationError, PhaseControlError
from .grids import (
    DIRICHLET,
    NEUMANN,
    Field,
    Grid,
    TimeField,
    Trajectory,
    build_grid,
    grad_norm_sq,
    inner_product,
    l2_v_norm,
    linf_grad_norm,
    linf_h_norm,
    space_time_inner,
    space_time_norm,
    time_antiderivative,
)
from .linearized import solve_linearized
from .objective import ObjectiveSpec, g_prime, g_value
from .potentials import OBSTACLE, PotentialSpec, gamma_value, w_hat
from .state import NewtonSettings, StateProblem, solve_state

#: One place for every audit threshold, mirroring the acceptance gates.
DEFAULT_TOLERANCES = {
    "duality": 1e-8,
    "gradient_rel_error": 1e-6,
    "gradient_fd_step": 1e-3,
    "richardson_low": 3.5,
    "richardson_high": 4.5,
    "energy_defect": 1e-3,
    "energy_order": 0.9,
    "contdep_ratio_spread": 1.2,
    "separation_margin": 1e-6,
    "yosida_diff_ratio": 0.75,
    "yosida_xi_growth": 1.1,
    "mms_time_order": 0.9,
    "mms_space_order": 1.9,
    "bangbang_violation": 0.01,
    "theta_linf_change": 0.05,
}


@dataclass
class AuditReport:
    name: str
    value: float
    threshold: float
    passed: bool
    runtime_seconds: float
    seed: int
    details: str = ""


@dataclass
class SeparationBounds:
    phi_lo: float
    phi_hi: float
    margin: float


def measure_separation(traj: Trajectory, spec: PotentialSpec) -> SeparationBounds:
    """Tightest observed bounds on φ over space-time and their distance
    from the potential's domain boundary."""
    lo, hi = spec.domain
    phi_lo = float(np.min(traj.phi.values))
    phi_hi = float(np.max(traj.phi.values))
    margin = math.inf
    if math.isfinite(lo):
        margin = min(margin, phi_lo - lo)
    if math.isfinite(hi):
        margin = min(margin, hi - phi_hi)
    return SeparationBounds(phi_lo, phi_hi, margin)


# -- finite-difference gradient oracle ---------------------------------


@dataclass
class GradientCheckRow:
    s: float
    fd_value: float
    adjoint_value: float
    rel_error: float
    note: str = ""


@dataclass
class GradientCheckTable:
    rows: list[GradientCheckRow]
    adjoint_value: float

    def remainder_ratios(self) -> list[float]:
        """|fd - adjoint| ratios between consecutive rows (≈4 for s halving)."""
        rem = [abs(r.fd_value - r.adjoint_value) for r in self.rows if not r.note]
        return [rem[i] / rem[i + 1] for i in range(len(rem) - 1) if rem[i + 1] > 0]


def fd_gradient_oracle(
    problem: StateProblem,
    objective: ObjectiveSpec,
    u: TimeField,
    h: TimeField,
    s_list,
    newton: NewtonSettings | None = None,
) -> GradientCheckTable:
    """Central differences of the cost against the adjoint directional value."""
    from .objective import eval_cost

    newton = newton or NewtonSettings()
    base = solve_state(problem, newton, u)
    adj = solve_adjoint(problem, base, objective)
    grad = gradient_from_adjoint(problem, adj)
    adjoint_value = space_time_inner(grad, h)

    rows = []
    for s in s_list:
        try:
            j_plus = eval_cost(
                objective,
                solve_state(
                    problem, newton, TimeField(u.grid, u.kind, u.values + s * h.values)
                ),
            ).total
            j_minus = eval_cost(
                objective,
                solve_state(
                    problem, newton, TimeField(u.grid, u.kind, u.values - s * h.values)
                ),
            ).total
        except PhaseControlError as exc:
            rows.append(GradientCheckRow(s, math.nan, adjoint_value, math.nan, str(exc)))
            continue
        fd = (j_plus - j_minus) / (2.0 * s)
        denom = max(abs(adjoint_value), 1e-300)
        rows.append(GradientCheckRow(s, fd, adjoint_value, abs(fd - adjoint_value) / denom))
    return GradientCheckTable(rows, adjoint_value)


# -- discrete duality ---------------------------------------------------


def duality_residual(
    problem: StateProblem,
    objective: ObjectiveSpec,
    base: Trajectory,
    h: TimeField,
) -> float:
    """Relative defect of <m h, p>_Q = kappa<θ-θ_q, Θ>_Q + <(g-chi)g', Φ>_Q."""
    sens = solve_linearized(problem, base, h)
    adj = solve_adjoint(problem, base, objective)
    lhs = space_time_inner(gradient_from_adjoint(problem, adj), h)

    grid = problem.grid
    dtheta = TimeField(
        grid, DIRICHLET, base.theta.values - objective.theta_q.values
    )
    term_theta = objective.kappa * space_time_inner(dtheta, sens.theta)
    source_phi = (g_value(objective, base.phi.values) - objective.chi.values) * g_prime(
        objective, base.phi.values
    )
    term_phi = space_time_inner(TimeField(grid, NEUMANN, source_phi), sens.phi)

    scale = max(abs(lhs), abs(term_theta), abs(term_phi)) + 1e-30
    return abs(lhs - term_theta - term_phi) / scale


# -- energy balance -----------------------------------------------------


@dataclass
class EnergyAudit:
    energy: np.ndarray
    dissipation: np.ndarray
    source: np.ndarray
    defect: np.ndarray

    @property
    def max_increase(self) -> float:
        """Largest per-step growth of the energy net of the control input."""
        steps = np.diff(self.energy) - self.source
        return float(max(np.max(steps), 0.0))

    @property
    def max_abs_defect(self) -> float:
        return float(np.max(np.abs(self.defect)))


def energy_audit(problem: StateProblem, traj: Trajectory, u: TimeField) -> EnergyAudit:
    """Discrete energy balance across the implicit steps.

    The energy E = 1/2||θ||² + 1/2||∇φ||² + ∫W(φ) dissipates through
    dt||∇θ||² + ||δφ||²/dt and is fed by dt (m u, θ); the per-step defect
    is the remainder, which shrinks at second order in dt.
    """
    grid = traj.grid
    dt = grid.dt
    n_steps = grid.n_time_steps
    w_n = grid.weights(NEUMANN)
    m_int = grid.restrict(problem.m.values)

    energy = np.zeros(n_steps + 1)
    for n in range(n_steps + 1):
        th = traj.theta.level(n)
        ph = traj.phi.level(n)
        well = float(np.sum(w_n * w_hat(problem.potential, ph.values)))
        energy[n] = 0.5 * inner_product(th, th) + 0.5 * grad_norm_sq(ph) + well

    dissipation = np.zeros(n_steps)
    source = np.zeros(n_steps)
    for n in range(1, n_steps + 1):
        th = traj.theta.level(n)
        dphi = Field(grid, NEUMANN, traj.phi.values[n] - traj.phi.values[n - 1])
        dissipation[n - 1] = dt * grad_norm_sq(th) + inner_product(dphi, dphi) / dt
        source[n - 1] = dt * float(
            np.dot(grid.weights(DIRICHLET) * (m_int * u.values[n]), th.values)
        )

    defect = np.diff(energy) + dissipation - source
    return EnergyAudit(energy, dissipation, source, defect)


# -- continuous dependence ----------------------------------------------


@dataclass
class ContinuousDependenceRecord:
    lhs: float
    rhs_convolved: float
    rhs_plain: float

    @property
    def ratio_convolved(self) -> float:
        return self.lhs / self.rhs_convolved if self.rhs_convolved > 0 else math.inf

    @property
    def ratio_plain(self) -> float:
        return self.lhs / self.rhs_plain if self.rhs_plain > 0 else math.inf


def continuous_dependence_check(
    problem: StateProblem,
    u1: TimeField,
    u2: TimeField,
    newton: NewtonSettings | None = None,
) -> ContinuousDependenceRecord:
    """Measured stability norms for a pair of controls.

    Left side: ||θ1-θ2|| over space-time, the sup-in-time gradient norm of
    the time integral of the temperature gap, and the order-parameter gap in
    both the sup-in-time and the gradient-carrying space-time norms.  Right
    sides: the space-time norms of the time-integrated and plain control gap.
    """
    newton = newton or NewtonSettings()
    t1 = solve_state(problem, newton, u1)
    t2 = solve_state(problem, newton, u2)
    grid = problem.grid

    dtheta = TimeField(grid, DIRICHLET, t1.theta.values - t2.theta.values)
    dphi = TimeField(grid, NEUMANN, t1.phi.values - t2.phi.values)
    du = TimeField(grid, DIRICHLET, u1.values - u2.values)

    lhs = (
        space_time_norm(dtheta)
        + linf_grad_norm(time_antiderivative(dtheta))
        + linf_h_norm(dphi)
        + l2_v_norm(dphi)
    )
    return ContinuousDependenceRecord(
        lhs,
        space_time_norm(time_antiderivative(du)),
        space_time_norm(du),
    )


def continuous_dependence_scaling(
    problem: StateProblem,
    u: TimeField,
    h: TimeField,
    s_list,
    newton: NewtonSettings | None = None,
) -> list[ContinuousDependenceRecord]:
    """Stability records for the perturbation family u vs u + s*h."""
    return [
        continuous_dependence_check(
            problem, u, TimeField(u.grid, u.kind, u.values + s * h.values), newton
        )
        for s in s_list
    ]


# -- Yosida continuation -------------------------------------------------


@dataclass
class YosidaRow:
    eps: float
    max_abs_xi: float
    overshoot: float
    failure: str = ""


@dataclass
class YosidaTable:
    rows: list[YosidaRow]
    diffs: list[float]

    def diff_ratios(self) -> list[float]:
        return [
            self.diffs[i + 1] / self.diffs[i]
            for i in range(len(self.diffs) - 1)
            if self.diffs[i] > 0
        ]

    def xi_growth_factors(self) -> list[float]:
        vals = [r.max_abs_xi for r in self.rows if not r.failure]
        return [
            vals[i + 1] / vals[i] for i in range(len(vals) - 1) if vals[i] > 0
        ]


def yosida_continuation(
    problem: StateProblem,
    eps_list,
    u: TimeField,
    newton: NewtonSettings | None = None,
) -> YosidaTable:
    """Forward solves of the obstacle problem over a ladder of Yosida levels."""
    if problem.potential.kind != OBSTACLE:
        raise ConfigurationError("Yosida continuation requires the obstacle kind")
    newton = newton or NewtonSettings()

    rows = []
    trajectories = []
    for eps in eps_list:
        spec = replace(problem.potential, eps_yosida=float(eps))
        prob = replace(problem, potential=spec)
        try:
            traj = solve_state(prob, newton, u)
        except PhaseControlError as exc:
            rows.append(YosidaRow(float(eps), math.nan, math.nan, str(exc)))
            trajectories.append(None)
            continue
        rows.append(
            YosidaRow(
                float(eps),
                float(np.max(np.abs(traj.xi.values))),
                float(np.max(np.abs(traj.phi.values))) - 1.0,
            )
        )
        trajectories.append(traj)

    diffs = []
    for a, b in zip(trajectories, trajectories[1:]):
        if a is None or b is None:
            diffs.append(math.nan)
        else:
            diffs.append(
                space_time_norm(
                    TimeField(problem.grid, NEUMANN, a.phi.values - b.phi.values)
                )
            )
    return YosidaTable(rows, diffs)


# -- manufactured solutions ----------------------------------------------


def _quadratic_profile(x: np.ndarray) -> np.ndarray:
    # stencil-exact: the 3-point Laplacian of x(1-x) is -2 on every node
    return x * (1.0 - x)


def _make_manufactured(grid: Grid, a, a_prime, c, c_prime):
    """Problem with sources matching θ_m = a(t)·x(1-x), φ_m = c(t).

    a(t)x(1-x) is quadratic in space (the stencil is exact) and c(t) is
    spatially constant, so the only discretization error left is the
    implicit Euler defect of a and c.
    """
    spec = PotentialSpec("regular")
    ell = 1.0
    xs_d = grid.coords(DIRICHLET)[0]
    prof_d = _quadratic_profile(xs_d)

    problem = StateProblem(
        grid,
        spec,
        ell,
        Field.full(grid, NEUMANN, 1.0),
        Field(grid, DIRICHLET, a(0.0) * prof_d),
        Field.full(grid, NEUMANN, c(0.0)),
        mms_source_phi=TimeField.from_function(
            grid,
            NEUMANN,
            lambda t, x: c_prime(t)
            + gamma_value(spec, c(t))
            - ell * a(t) * _quadratic_profile(x),
        ),
    )
    u = TimeField.from_function(
        grid,
        DIRICHLET,
        lambda t, x: a_prime(t) * _quadratic_profile(x) + 2.0 * a(t) + ell * c_prime(t),
    )
    theta_exact = lambda t, x: a(t) * _quadratic_profile(x)
    phi_exact = lambda t, x: c(t) + 0.0 * x
    return problem, u, theta_exact, phi_exact


def _make_manufactured_sine(grid: Grid):
    """θ_m = t·sin(pi x), φ_m = cos(pi x)/2: linear/constant in time, so the
    implicit step is time-exact and the error is purely the O(h²) stencil
    defect."""
    spec = PotentialSpec("regular")
    ell = 1.0
    pi = math.pi

    problem = StateProblem(
        grid,
        spec,
        ell,
        Field.full(grid, NEUMANN, 1.0),
        Field.zeros(grid, DIRICHLET),
        Field.from_function(grid, NEUMANN, lambda x: 0.5 * np.cos(pi * x)),
        mms_source_phi=TimeField.from_function(
            grid,
            NEUMANN,
            lambda t, x: 0.5 * pi**2 * np.cos(pi * x)
            + gamma_value(spec, 0.5 * np.cos(pi * x))
            - ell * t * np.sin(pi * x),
        ),
    )
    u = TimeField.from_function(
        grid,
        DIRICHLET,
        lambda t, x: np.sin(pi * x) + t * pi**2 * np.sin(pi * x),
    )
    theta_exact = lambda t, x: t * np.sin(pi * x)
    phi_exact = lambda t, x: 0.5 * np.cos(pi * x)
    return problem, u, theta_exact, phi_exact


def _solution_error(grid: Grid, traj: Trajectory, theta_exact, phi_exact) -> float:
    """max over levels of the spatial L2 error, both components."""
    xs_d = grid.coords(DIRICHLET)[0]
    xs_n = grid.coords(NEUMANN)[0]
    worst = 0.0
    for n in range(1, grid.n_time_steps + 1):
        t = grid.times[n]
        eth = Field(grid, DIRICHLET, traj.theta.values[n] - theta_exact(t, xs_d))
        eph = Field(grid, NEUMANN, traj.phi.values[n] - phi_exact(t, xs_n))
        worst = max(
            worst,
            math.sqrt(inner_product(eth, eth)) + math.sqrt(inner_product(eph, eph)),
        )
    return worst


def _observed_order(steps, errors) -> float:
    logs = np.log(np.asarray(steps))
    loge = np.log(np.asarray(errors))
    return float(np.polyfit(logs, loge, 1)[0])


@dataclass
class MMSResult:
    stencil_exact_error: float
    time_order: float
    space_order: float
    time_table: list[tuple[float, float]]
    space_table: list[tuple[float, float]]


def mms_convergence(
    newton: NewtonSettings | None = None,
    time_steps=(8, 16, 32, 64),
    space_cells=(8, 16, 32, 64),
) -> MMSResult:
    """Manufactured-solution study: exact reproduction, dt order, h order."""
    newton = newton or NewtonSettings()

    # linear-in-time data: the implicit step reproduces them to solver tolerance
    grid = build_grid(1.0, 12, 7, 1.0)
    problem, u, th_ex, ph_ex = _make_manufactured(
        grid, a=lambda t: t, a_prime=lambda t: 1.0, c=lambda t: 0.3 + 0.2 * t,
        c_prime=lambda t: 0.2
    )
    exact_err = _solution_error(grid, solve_state(problem, newton, u), th_ex, ph_ex)

    time_table = []
    for n_t in time_steps:
        grid = build_grid(1.0, 16, n_t, 1.0)
        problem, u, th_ex, ph_ex = _make_manufactured(
            grid,
            a=math.sin,
            a_prime=math.cos,
            c=lambda t: 0.3 + 0.2 * math.cos(t),
            c_prime=lambda t: -0.2 * math.sin(t),
        )
        err = _solution_error(grid, solve_state(problem, newton, u), th_ex, ph_ex)
        time_table.append((grid.dt, err))

    space_table = []
    for n_x in space_cells:
        grid = build_grid(1.0, n_x, 8, 1.0)
        problem, u, th_ex, ph_ex = _make_manufactured_sine(grid)
        err = _solution_error(grid, solve_state(problem, newton, u), th_ex, ph_ex)
        space_table.append((grid.h[0], err))

    return MMSResult(
        exact_err,
        _observed_order(*zip(*time_table)),
        _observed_order(*zip(*space_table)),
        time_table,
        space_table,
    )


# -- audit driver ---------------------------------------------------------


def _timed(fn):
    start = time.perf_counter()
    value, threshold, passed, details = fn()
    return value, threshold, passed, details, time.perf_counter() - start


def random_direction(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> TimeField:
    vals = rng.standard_normal((grid.n_time_steps + 1, grid.n_nodes(DIRICHLET)))
    vals[0] = 0.0
    return TimeField(grid, DIRICHLET, scale * vals)


def smooth_direction(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> TimeField:
    """Low-frequency direction with random coefficients.

    Finite-difference order measurements need the truncation term to
    dominate rounding noise, which a white-noise direction does not give.
    """
    a = rng.uniform(0.5, 1.5, size=3)
    x = grid.coords(DIRICHLET)[0] / grid.lengths[0]
    ts = grid.times
    vals = scale * (
        np.outer(a[0] + a[1] * ts, np.sin(math.pi * x))
        + a[2] * np.outer(np.cos(ts), np.sin(2.0 * math.pi * x))
    )
    vals[0] = 0.0
    return TimeField(grid, DIRICHLET, vals)


def run_standard_audits(scenario, checks, seed: int, tolerances=None) -> list[AuditReport]:
    """Run the named audits against an instantiated scenario.

    ``scenario`` carries problem, objective, box, settings and the nominal
    control (see config.Scenario); every check appears exactly once in the
    returned list, in the order given.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    rng = np.random.default_rng(seed)
    reports = []

    for name in checks:
        if name == "duality":
            fn = lambda: _audit_duality(scenario, rng, tol)
        elif name == "gradient":
            fn = lambda: _audit_gradient(scenario, rng, tol)
        elif name == "energy":
            fn = lambda: _audit_energy(scenario, tol)
        elif name == "contdep":
            fn = lambda: _audit_contdep(scenario, rng, tol)
        elif name == "separation":
            fn = lambda: _audit_separation(scenario, rng, tol)
        elif name == "yosida":
            fn = lambda: _audit_yosida(scenario, tol)
        elif name == "mms":
            fn = lambda: _audit_mms(scenario, tol)
        elif name == "theta_linf":
            fn = lambda: _audit_theta_linf(scenario, tol)
        else:
            raise ConfigurationError(f"unknown audit check {name!r}")
        value, threshold, passed, details, runtime = _timed(fn)
        reports.append(AuditReport(name, value, threshold, passed, runtime, seed, details))
    return reports


def _audit_duality(scenario, rng, tol):
    base = solve_state(scenario.problem, scenario.newton, scenario.u)
    worst = 0.0
    for _ in range(5):
        h = random_direction(scenario.grid, rng)
        worst = max(
            worst, duality_residual(scenario.problem, scenario.objective, base, h)
        )
    return worst, tol["duality"], worst <= tol["duality"], "max over 5 directions"


def _audit_gradient(scenario, rng, tol):
    s = tol["gradient_fd_step"]
    h = smooth_direction(scenario.grid, rng)
    table = fd_gradient_oracle(
        scenario.problem,
        scenario.objective,
        scenario.u,
        h,
        [40.0 * s, 20.0 * s, 10.0 * s, s],
        scenario.newton,
    )
    rel = table.rows[-1].rel_error
    # order ratios from the halving pairs, where truncation dominates rounding
    ratios = table.remainder_ratios()[:2]
    ratios_ok = all(tol["richardson_low"] <= r <= tol["richardson_high"] for r in ratios)
    passed = rel <= tol["gradient_rel_error"] and ratios_ok and bool(ratios)
    return rel, tol["gradient_rel_error"], passed, f"richardson ratios {ratios}"


def _audit_energy(scenario, tol):
    zero = TimeField.zeros(scenario.grid, DIRICHLET)
    traj = solve_state(scenario.problem, scenario.newton, zero)
    audit = energy_audit(scenario.problem, traj, zero)
    worst = max(audit.max_increase, audit.max_abs_defect)

    defects = []
    dts = []
    for factor in (1, 2, 4):
        grid = build_grid(
            scenario.grid.lengths,
            scenario.grid.n_cells,
            scenario.grid.n_time_steps * factor,
            scenario.grid.t_final,
        )
        fine = scenario.on_grid(grid)
        z = TimeField.zeros(grid, DIRICHLET)
        a = energy_audit(fine.problem, solve_state(fine.problem, fine.newton, z), z)
        defects.append(max(a.max_abs_defect, 1e-300))
        dts.append(grid.dt)
    order = _observed_order(dts, defects)
    passed = worst <= tol["energy_defect"] and order >= tol["energy_order"]
    return worst, tol["energy_defect"], passed, f"defect order in dt {order:.2f}"


def _audit_contdep(scenario, rng, tol):
    h = random_direction(scenario.grid, rng)
    records = continuous_dependence_scaling(
        scenario.problem, scenario.u, h, (1e-1, 1e-2, 1e-3), scenario.newton
    )
    ratios = [r.ratio_convolved for r in records]
    spread = max(ratios) / min(ratios)
    sqrt_t = math.sqrt(scenario.grid.t_final)
    ordering = all(r.rhs_convolved <= sqrt_t * r.rhs_plain + 1e-14 for r in records)
    passed = spread <= tol["contdep_ratio_spread"] and ordering
    return spread, tol["contdep_ratio_spread"], passed, f"ratios {ratios}"


def _audit_separation(scenario, rng, tol):
    lo, hi = scenario.problem.potential.domain
    if not (math.isfinite(lo) or math.isfinite(hi)):
        return 0.0, tol["separation_margin"], True, "entire domain, nothing to check"
    margin = math.inf
    controls = [scenario.box.u_min, scenario.box.u_max]
    for _ in range(2):
        draw = rng.random(scenario.box.u_min.values.shape)
        controls.append(
            TimeField(
                scenario.grid,
                DIRICHLET,
                np.where(draw < 0.5, scenario.box.u_min.values, scenario.box.u_max.values),
            )
        )
    for control in controls:
        traj = solve_state(scenario.problem, scenario.newton, control)
        margin = min(margin, measure_separation(traj, scenario.problem.potential).margin)
    return (
        margin,
        tol["separation_margin"],
        margin >= tol["separation_margin"],
        "min margin over box extremes and random bang-bang controls",
    )


def _audit_yosida(scenario, tol):
    table = yosida_continuation(
        scenario.problem, (0.2, 0.1, 0.05, 0.025), scenario.u, scenario.newton
    )
    ratios = table.diff_ratios()
    growth = table.xi_growth_factors()
    worst_ratio = max(ratios) if ratios else math.inf
    passed = (
        bool(ratios)
        and worst_ratio <= tol["yosida_diff_ratio"]
        and all(g <= tol["yosida_xi_growth"] for g in growth)
    )
    return worst_ratio, tol["yosida_diff_ratio"], passed, f"xi growth {growth}"


def _audit_mms(scenario, tol):
    if scenario.grid.dim != 1:
        raise ConfigurationError("the manufactured-solution audit is 1D only")
    result = mms_convergence(scenario.newton)
    passed = (
        result.stencil_exact_error <= 1e-7
        and result.time_order >= tol["mms_time_order"]
        and result.space_order >= tol["mms_space_order"]
    )
    return (
        result.time_order,
        tol["mms_time_order"],
        passed,
        f"space order {result.space_order:.2f}, exact-case error "
        f"{result.stencil_exact_error:.2e}",
    )


def _audit_theta_linf(scenario, tol):
    traj = solve_state(scenario.problem, scenario.newton, scenario.u)
    coarse = float(np.max(np.abs(traj.theta.values)))

    grid = build_grid(
        scenario.grid.lengths,
        tuple(2 * n for n in scenario.grid.n_cells),
        scenario.grid.n_time_steps,
        scenario.grid.t_final,
    )
    fine_sc = scenario.on_grid(grid)
    fine = float(
        np.max(np.abs(solve_state(fine_sc.problem, fine_sc.newton, fine_sc.u).theta.values))
    )
    change = abs(fine - coarse) / max(abs(coarse), 1e-300)
    return change, tol["theta_linf_change"], change <= tol["theta_linf_change"], (
        f"max|theta| {coarse:.6g} -> {fine:.6g}"
    )
