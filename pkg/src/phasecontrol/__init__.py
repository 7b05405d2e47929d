"""Adjoint-based optimal control of a two-field phase transition model.

The package solves the coupled temperature/order-parameter system with a
configurable double-well potential (including singular logarithmic and
obstacle variants), evaluates a smoothed interface-tracking cost, computes
exact discrete gradients through the transposed linearized system, and runs
projected gradient descent over a box of admissible controls.  The verify
module holds independent oracles for every one of those pieces.
"""

__version__ = "0.1.0"

from .adjoint import AdjointPair, gradient_from_adjoint, solve_adjoint
from .errors import (
    ConfigurationError,
    DomainViolationError,
    NumericalError,
    PhaseControlError,
    ShapeError,
    StepFailureError,
    UnsupportedPotentialError,
)
from .grids import (
    DIRICHLET,
    NEUMANN,
    Field,
    Grid,
    TimeField,
    Trajectory,
    build_grid,
    inner_product,
    laplacian_apply,
    norm,
    space_time_inner,
    space_time_norm,
    time_antiderivative,
)
from .linearized import SensitivityPair, solve_linearized
from .objective import CostBreakdown, ObjectiveSpec, eval_cost, eval_g
from .optimizer import (
    BangBangReport,
    ControlBox,
    OptimizeResult,
    PGSettings,
    classify_bang_bang,
    optimize,
    project_box,
)
from .potentials import (
    PotentialSpec,
    beta,
    beta_prime,
    beta_second,
    gamma_prime,
    gamma_second,
    gamma_value,
    pi_prime,
    pi_second,
    pi_value,
    yosida,
)
from .state import NewtonSettings, StateProblem, solve_state, step_state
from .verify import (
    AuditReport,
    SeparationBounds,
    continuous_dependence_check,
    duality_residual,
    energy_audit,
    fd_gradient_oracle,
    measure_separation,
    mms_convergence,
    yosida_continuation,
)
