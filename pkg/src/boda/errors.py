"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when an iterative routine fails to converge or a numeric
    invariant (e.g. a proven bound) is violated at runtime."""
