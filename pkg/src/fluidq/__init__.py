"""Fluid models of many-server queues with reneging.

Submodules: ``distributions``, ``measures``, ``fluid``, ``invariant``,
``entropy``, ``renewal``, ``multiclass``, ``des`` and ``cli``.
"""
from .distributions import Distribution, classify_hazard, make_distribution
from .errors import ConfigError, NumericalAbort
from .fluid import FluidConfig, FluidTrajectory, solve
from .invariant import InvariantState, invariant_state
from .measures import FiniteMeasure, bl_distance, equilibrium, tv_distance
from .multiclass import MulticlassConfig, rho_q, solve_multiclass

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Distribution",
    "FiniteMeasure",
    "FluidConfig",
    "FluidTrajectory",
    "InvariantState",
    "MulticlassConfig",
    "NumericalAbort",
    "bl_distance",
    "classify_hazard",
    "equilibrium",
    "invariant_state",
    "make_distribution",
    "rho_q",
    "solve",
    "solve_multiclass",
    "tv_distance",
]
