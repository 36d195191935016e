"""Compressible nematic liquid-crystal flow on the periodic torus.

Pseudo-spectral and finite-difference solver, analysis diagnostics
(energy, effective viscous flux, director identities, interpolation
constants), parameter sweeps and a command-line front end.
"""

__version__ = "0.1.0"

from .grid import Grid, Scheme, FieldKind, Calculus, get_calculus
from .model import PhysParams, State, tendencies, regime_check
from .integrator import InitSpec, SolverConfig, build_initial_data, run, step, stable_dt

__all__ = [
    "Calculus",
    "FieldKind",
    "Grid",
    "InitSpec",
    "PhysParams",
    "Scheme",
    "SolverConfig",
    "State",
    "build_initial_data",
    "get_calculus",
    "regime_check",
    "run",
    "stable_dt",
    "step",
    "tendencies",
]
