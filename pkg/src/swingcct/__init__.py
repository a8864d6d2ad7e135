"""Set-based critical clearing time estimation for swing-equation networks."""

__version__ = "0.1.0"

from .model import Bounds, Scenario, SolverSettings, StageModel, load_scenario
from .equilibrium import find_equilibrium, sync_certificate

__all__ = [
    "Bounds",
    "Scenario",
    "SolverSettings",
    "StageModel",
    "load_scenario",
    "find_equilibrium",
    "sync_certificate",
]
