"""Pseudo-spectral simulation and operator analysis for Keller-Segel
chemotaxis with fractional dissipation and strong advection on the torus."""
from .errors import (
    ConfigError, DataIntegrityError, DegenerateInputError, KsmixError,
    ParameterError, PreconditionError, ResolutionError, SizeError,
)
from .grid import PhysicalField, SpectralField, TorusGrid
from .flows import FlowSpec
from .evolve import ModelParams, RunOutcome, SimState, StepPolicy, initial_data, linear_run, run

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataIntegrityError", "DegenerateInputError", "KsmixError",
    "ParameterError", "PreconditionError", "ResolutionError", "SizeError",
    "PhysicalField", "SpectralField", "TorusGrid", "FlowSpec",
    "ModelParams", "RunOutcome", "SimState", "StepPolicy",
    "initial_data", "linear_run", "run",
]
