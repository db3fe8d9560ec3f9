"""Ultrasound-modulated EIT laboratory.

Forward elliptic solves, synthesis of modulated boundary functionals,
recovery of the internal power density, Lorentzian classification of the
linearized problem and hyperbolic marching reconstruction of conductivity.
"""
from ._backend import BACKEND
from .errors import NumericalAbort, PreconditionError, UmeitError

__version__ = "0.1.0"

__all__ = ["BACKEND", "NumericalAbort", "PreconditionError", "UmeitError", "__version__"]
