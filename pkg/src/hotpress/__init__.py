"""Finite-element simulator for coupled heat, moisture and air transport
during the hot pressing of medium-density fiberboard.

The unknowns per mesh node are temperature [degC], moisture content
[% of dry mass] and dry-air density in the pore gas [kg/m3].  See the
README for the model summary, file formats and the command-line interface.
"""

from .errors import (
    ConvergenceError,
    DomainError,
    HotPressError,
    LinearSolveError,
    MeshError,
    NewtonError,
    ScenarioError,
    StepError,
)
from .properties import HailwoodHorrobinIsotherm, MaterialParams
from .scenario import (
    PressSchedule,
    Scenario,
    SolverConfig,
    humphrey_preset,
    load_scenario,
    run_scenario,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "HailwoodHorrobinIsotherm",
    "HotPressError",
    "LinearSolveError",
    "MaterialParams",
    "MeshError",
    "NewtonError",
    "PressSchedule",
    "Scenario",
    "ScenarioError",
    "SolverConfig",
    "StepError",
    "humphrey_preset",
    "load_scenario",
    "run_scenario",
    "save_scenario",
    "__version__",
]
