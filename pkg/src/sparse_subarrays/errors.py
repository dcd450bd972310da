"""Exception types shared across the package."""


class SubarrayError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SubarrayError, ValueError):
    pass


class ConstraintViolation(SubarrayError):
    """Module footprints overlap (the configuration violates the no-overlap constraint)."""


class DegenerateGeometry(SubarrayError):
    """Array geometry makes a quantity undefined (collinear array, singular FIM, ...)."""


class InfeasibleInstance(SubarrayError):
    """The requested search or scenario cannot be realized (grid too small, rejection failure)."""


class NumericalFailure(SubarrayError):
    """A quadrature or iterative computation did not converge.

    Attributes:
        residual: estimate of the remaining error when the failure was detected.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(SubarrayError):
    """Malformed run configuration or input file."""
