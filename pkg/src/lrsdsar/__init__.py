"""Low-rank + sparse SAR/ISAR imaging with a fast ADMM solver and UQP autofocus."""

from .linops import DimensionError, ForwardModel, ValidationError, apply_adjoint, apply_forward
from .patch import PatchConfig, patchify, unpatchify
from .solver import ISAR_SPARSE, SAR_LRSD, SolverConfig, SolveResult, solve

__all__ = [
    "DimensionError",
    "ForwardModel",
    "ISAR_SPARSE",
    "PatchConfig",
    "SAR_LRSD",
    "SolveResult",
    "SolverConfig",
    "ValidationError",
    "apply_adjoint",
    "apply_forward",
    "patchify",
    "solve",
    "unpatchify",
]

__version__ = "0.1.0"
