"""Sparse recovery from nonlinear observations.

Iterative hard thresholding with local linearization (:func:`niht_solve`),
projected gradient descent over unions of subspaces (:func:`pgd_solve`),
estimators for the constants the convergence guarantees depend on, and
calculators for the resulting iteration counts and error bounds.
"""
from .analysis import *  # noqa: F401,F403
from .constraints import *  # noqa: F401,F403
from .errors import Diverged, DomainViolation, InfeasibleStep, InvalidInput
from .harness import *  # noqa: F401,F403
from .operators import *  # noqa: F401,F403
from .solvers import *  # noqa: F401,F403
from . import analysis, constraints, harness, operators, solvers

__version__ = "0.1.0"

__all__ = (
    ["Diverged", "DomainViolation", "InfeasibleStep", "InvalidInput"]
    + analysis.__all__
    + constraints.__all__
    + harness.__all__
    + operators.__all__
    + solvers.__all__
)
