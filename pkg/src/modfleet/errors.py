"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a documented precondition or schema."""


class ConvergenceError(RuntimeError):
    """An iterative numerical routine failed to converge."""
