"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input or configuration violates a documented precondition."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (overflow, non-convergence, bad residual).

    ``residual`` and ``time`` are attached when known so callers can report
    where the failure happened.
    """

    def __init__(self, message, residual=None, time=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.time = time
        self.iteration = iteration


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""


class AuditFailure(RuntimeError):
    """A diagnostic bound was violated along a computed trajectory."""

    def __init__(self, message, violations=None, report=None):
        super().__init__(message)
        self.violations = list(violations or [])
        self.report = report
