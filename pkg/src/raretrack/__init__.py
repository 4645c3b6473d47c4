"""Rarefaction-tracking particle method for scalar conservation laws in 1D."""
from raretrack.flux import Convexity, FluxError, FluxModel, custom_flux, make_flux
from raretrack.front import (ParticleFront, RunDiagnostics, SolverError, advance,
        next_event, run, total_area, total_variation)
from raretrack.management import ManagementError, manage
from raretrack.postprocess import Polyline, evaluate, l1_distance, sharpen_shocks
from raretrack.sampling import InitialCondition, sample
from raretrack.scenario import Scenario, ScenarioError
from raretrack.sources import SourceModel, make_source
from raretrack.wave import Particle, Role, WaveSegment

__version__ = "0.1.0"

__all__ = [
    "Convexity", "FluxError", "FluxModel", "custom_flux", "make_flux",
    "ParticleFront", "RunDiagnostics", "SolverError", "advance", "next_event", "run",
    "total_area", "total_variation", "ManagementError", "manage",
    "Polyline", "evaluate", "l1_distance", "sharpen_shocks",
    "InitialCondition", "sample", "Scenario", "ScenarioError",
    "SourceModel", "make_source", "Particle", "Role", "WaveSegment",
]
