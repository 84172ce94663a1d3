"""Exception hierarchy shared by all modules."""


class MemsError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(MemsError, ValueError):
    """Invalid physical or numerical parameter."""


class DimensionError(MemsError, ValueError):
    """Array shape does not match the grid."""


class NumericalError(MemsError, ArithmeticError):
    """A linear or eigen solve failed."""


class ConvergenceError(NumericalError):
    """Newton iteration did not converge."""


class TouchdownError(MemsError):
    """The gap 1 + u fell below the touchdown threshold."""

    def __init__(self, message, min_gap=None, location=None):
        super().__init__(message)
        self.min_gap = min_gap
        self.location = location


class GuardError(MemsError):
    """The state left the admissible set S_alpha(kappa/2) through its norm."""


class AdmissibilityError(MemsError, ValueError):
    """A state required to lie in S_alpha(kappa) does not."""
