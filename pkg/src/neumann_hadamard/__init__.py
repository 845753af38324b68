"""Hadamard-type eigenvalue asymptotics for the Neumann Laplacian on perturbed rectangles."""

from . import abstract_core, experiments, fem, geometry, hadamard, linalg
from .errors import (
    ClusterResolutionError,
    ConvergenceError,
    DegenerateDomainError,
    DegenerateProjectionError,
    InputError,
    SolverError,
    StudyInconclusiveError,
)

__all__ = [
    "abstract_core",
    "experiments",
    "fem",
    "geometry",
    "hadamard",
    "linalg",
    "ClusterResolutionError",
    "ConvergenceError",
    "DegenerateDomainError",
    "DegenerateProjectionError",
    "InputError",
    "SolverError",
    "StudyInconclusiveError",
]
