"""Exception types shared across the package."""


class SpinqlError(Exception):
    """Base class for all package errors."""


class ValidationError(SpinqlError):
    """A metric spec, config, or input field violates a documented precondition."""


class UnsupportedDimensionError(ValidationError):
    """Requested fiber dimension is outside the supported range."""


class AssemblyError(SpinqlError):
    """Grid too small (or otherwise unusable) for the requested stencil."""


class SolverConvergenceError(SpinqlError):
    """Linear solve finished with residuals above the contract tolerance."""

    def __init__(self, message, dirac_residual=None, boundary_residual=None):
        super().__init__(message)
        self.dirac_residual = dirac_residual
        self.boundary_residual = boundary_residual


class OutOfHypothesisError(ValidationError):
    """Closed-form evaluator called outside the hypotheses it assumes."""
