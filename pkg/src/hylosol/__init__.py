"""Hylomorphic solitons of the nonlinear Schroedinger-Poisson system.

Constrained energy minimization, hylomorphy certificates, and orbital
stability experiments by split-step time evolution.
"""

__version__ = "0.1.0"

from .functionals import PhysicsConfig, coercivity_params  # noqa: E402
from .grid import BoxGrid3, Field, FullState, RadialGrid  # noqa: E402
from .model import LatticePotential, NonlinearityModel, check_assumptions  # noqa: E402

__all__ = [
    "BoxGrid3", "Field", "FullState", "LatticePotential", "NonlinearityModel",
    "PhysicsConfig", "RadialGrid", "check_assumptions", "coercivity_params",
]
