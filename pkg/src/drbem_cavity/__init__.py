"""DRBEM solver for the lid-driven cavity with Darcy-Forchheimer-Brinkman flow."""
from .assembly import DrbemSystem, assemble_system, load_or_assemble
from .config import ConfigError, RunConfig, load_config, parse_config
from .geometry import CavityMesh, LidSegment, SingleLid, SplitLid, build_square_mesh
from .solver import FieldState, FlowParams, SolveSummary, SolverConfig, SolverError, run, stable_dt

__version__ = "0.1.0"

__all__ = [
    "CavityMesh",
    "ConfigError",
    "DrbemSystem",
    "FieldState",
    "FlowParams",
    "LidSegment",
    "RunConfig",
    "SingleLid",
    "SolveSummary",
    "SolverConfig",
    "SolverError",
    "SplitLid",
    "assemble_system",
    "build_square_mesh",
    "load_config",
    "load_or_assemble",
    "parse_config",
    "run",
    "stable_dt",
]
