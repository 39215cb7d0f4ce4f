"""Exception types shared across the package.

Each maps to one CLI exit status (see ``cli.EXIT_CODES``).
"""


class ConfigurationError(ValueError):
    """Invalid input detected before any computation starts."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class OutOfRangeError(ValueError):
    """A query fell outside a non-periodic table."""


class SolverDivergenceError(RuntimeError):
    """Non-finite values appeared during time marching or iteration."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NonConvergenceError(RuntimeError):
    """An iterative solve ran out of iterations."""

    def __init__(self, message, last_residual=None, iterations=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations


class InvariantViolation(AssertionError):
    """A verified structural property failed."""
