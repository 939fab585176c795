"""Nonlocal convolution energies on periodically perforated domains.

Submodules: ``kernels``, ``geometry``, ``grid``, ``energy``, ``interpolate``,
``cellproblem``, ``regimes`` and the ``cli`` front end.
"""
from . import cellproblem, energy, geometry, grid, interpolate, kernels, regimes
from .errors import (
    ConfigError,
    ConvergenceError,
    PerfhomError,
    PreconditionError,
    ResolutionError,
)

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "geometry",
    "grid",
    "energy",
    "interpolate",
    "cellproblem",
    "regimes",
    "PerfhomError",
    "ConfigError",
    "ConvergenceError",
    "PreconditionError",
    "ResolutionError",
]
