"""2D FEM soft swimmer simulation, adjoint gradients and system identification."""

from ._swimsim import *  # noqa: F401,F403
from ._swimsim import InputError, NumericalError, __doc__  # noqa: F401

__version__ = "0.1.0"
