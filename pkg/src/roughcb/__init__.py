"""Rough continuous-state branching processes: scale functions, Volterra solvers and simulation."""

from .errors import NumericalError, RoughCBError, ValidationError
from .model import InitialState, ModelParams, TimeGrid, standard_params, standardize
from .special import mittag_leffler, scale_W, scale_Wp
from .volterra import characteristic_functional, solve_v

__version__ = "0.1.0"

__all__ = ["InitialState", "ModelParams", "NumericalError", "RoughCBError", "TimeGrid", "ValidationError",
           "characteristic_functional", "mittag_leffler", "scale_W", "scale_Wp", "solve_v", "standard_params",
           "standardize", "__version__"]
