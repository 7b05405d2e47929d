"""Exception hierarchy shared across the package."""


class PhaseControlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PhaseControlError):
    """Invalid grid, potential, objective or run configuration."""


class ShapeError(PhaseControlError):
    """Field layouts or time levels do not match."""


class DomainViolationError(PhaseControlError):
    """A potential was evaluated at or outside the boundary of its domain."""

    def __init__(self, value, lo, hi):
        self.value = value
        self.lo = lo
        self.hi = hi
        super().__init__(
            f"argument {value!r} is not strictly inside the potential domain ({lo}, {hi})"
        )


class NumericalError(PhaseControlError):
    """A linear solve or root find failed to converge."""


class StepFailureError(NumericalError):
    """Newton iteration for one implicit time step did not converge."""

    def __init__(self, message, time_index=None, residual=None):
        self.time_index = time_index
        self.residual = residual
        super().__init__(message)


class UnsupportedPotentialError(PhaseControlError):
    """Operation requires derivatives the potential kind does not provide."""
