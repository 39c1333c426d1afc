"""Exception hierarchy shared by every module."""


class BellHGMError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(BellHGMError, ValueError):
    """Input outside the mathematical domain of an operation."""


class CapacityError(BellHGMError):
    """Support enumeration would exceed the configured cap."""


class NumericError(BellHGMError, ArithmeticError):
    """A numerical procedure failed (singular pivot, divergence, ...)."""


class SingularityError(NumericError):
    """A matrix that must be inverted is singular at the given point."""


class StepSizeError(NumericError):
    """An integration step grew the state by more than the allowed factor."""


class ConvergenceError(NumericError):
    """An iterative method hit its iteration limit."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
