"""Exception hierarchy shared by all modules."""


class InputError(ValueError):
    """Invalid user-supplied data or configuration."""


class SingularMatrixError(ArithmeticError):
    """A matrix that must be inverted is singular or numerically so."""


class DegenerateFrontierError(ArithmeticError):
    """The mean-variance frontier collapses (mean proportional to ones)."""


class ConvergenceError(ArithmeticError):
    """An iterative solver failed to reach its tolerance."""


class UnstableSolutionError(ArithmeticError):
    """The fixed point violates gamma * gamma_tilde < 1."""
