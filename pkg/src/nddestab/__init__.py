"""Stability certification, simulation and cross-validation of impulsive
neutral delay differential systems.

The package certifies asymptotic and exponential stability through a
contraction criterion (a weighted coefficient sum rho < 1), integrates
trajectories with a method-of-steps RK4 scheme that advances the neutral
combination, and cross-validates the integrator against a Picard
iteration on the equivalent integral equation.
"""

from .certify import (certify_asymptotic, certify_corollary,
                      certify_exponential, kernel_sup)
from .expr import ScalarExpr, parse, sup_abs
from .model import (Certificate, ImpulseSchedule, SystemSpec, Trajectory,
                    theta, validate)
from .oracle import crosscheck, picard_operator, picard_solve
from .simulate import IntegratorConfig, SimulationError, simulate

__version__ = "1.0.0"

__all__ = [
    "ScalarExpr", "parse", "sup_abs",
    "SystemSpec", "ImpulseSchedule", "Trajectory", "Certificate",
    "theta", "validate",
    "certify_asymptotic", "certify_exponential", "certify_corollary",
    "kernel_sup",
    "IntegratorConfig", "simulate", "SimulationError",
    "picard_solve", "picard_operator", "crosscheck",
    "__version__",
]
