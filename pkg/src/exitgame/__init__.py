"""Zero-sum differential games with exit time and a lifeline.

Grid solver for the Kruzhkov-transformed value, extremal-shift feedback
strategies built from its inf/sup-convolutions, step-by-step motion
simulation and viscosity-condition checks.
"""

from .config import ConfigError, load, scenario_path
from .geometry import kruzhkov, kruzhkov_inv
from .grid import Grid, NodeClass, ValueField, interpolate
from .scenario import GameSpec
from .solver import SolveReport, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GameSpec",
    "Grid",
    "NodeClass",
    "SolveReport",
    "SolverConfig",
    "ValueField",
    "interpolate",
    "kruzhkov",
    "kruzhkov_inv",
    "load",
    "scenario_path",
    "solve",
]
