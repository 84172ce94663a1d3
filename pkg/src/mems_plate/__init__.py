"""Simulation and analysis of the fourth-order damped MEMS plate model."""

__version__ = "0.1.0"

from .core import (FractionalNormContext, Grid1D, Grid2D, ModelParams, PlateState, check_S_alpha,
                   fractional_norm)
from .errors import (AdmissibilityError, ConvergenceError, GuardError, MemsError, NumericalError,
                     ParameterError, TouchdownError)
from .plate import PlateOperator, assemble_plate_operator, principal_eigenpair, solve_shifted

__all__ = [
    "AdmissibilityError",
    "ConvergenceError",
    "FractionalNormContext",
    "Grid1D",
    "Grid2D",
    "GuardError",
    "MemsError",
    "ModelParams",
    "NumericalError",
    "ParameterError",
    "PlateOperator",
    "PlateState",
    "TouchdownError",
    "assemble_plate_operator",
    "check_S_alpha",
    "fractional_norm",
    "principal_eigenpair",
    "solve_shifted",
]
