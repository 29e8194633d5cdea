"""Numerical toolkit for C^1 hyperbolic systems whose derivative has a Dini modulus.

Submodules: modulus, systems, grassmann, lemmas, shift, pressure, srb,
horseshoe, experiments, cli.
"""
from .errors import (BowenBallError, CodingMismatchError, ConvergenceError, DomainError,
                     NonDiniError, TransversalityError, ValidationError)

__version__ = "0.1.0"

__all__ = ["BowenBallError", "CodingMismatchError", "ConvergenceError", "DomainError",
           "NonDiniError", "TransversalityError", "ValidationError", "__version__"]
