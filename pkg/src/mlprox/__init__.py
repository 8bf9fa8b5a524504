"""Recursive multilevel proximal trust-region optimization for ``f + phi`` problems."""
from .prox import L1, Box, L1Box, ProxFunction, PulledBack, Zero, prox_pullback, pullback, stationarity_h
from .smooth import Counters, SmoothObjective, SubspaceObjective, build_coarse_model
from .spg import SPGParams, spg_solve
from .transfer import Level, LevelStack, TransferOperator, build_avg_1d, build_tensor_2d
from .trust_region import CompositeObjective, FCDViolation, TRParams, rmntr, solve_single_level

__all__ = [
    "L1", "Box", "L1Box", "Zero", "ProxFunction", "PulledBack", "prox_pullback", "pullback", "stationarity_h",
    "Counters", "SmoothObjective", "SubspaceObjective", "build_coarse_model",
    "SPGParams", "spg_solve",
    "Level", "LevelStack", "TransferOperator", "build_avg_1d", "build_tensor_2d",
    "CompositeObjective", "FCDViolation", "TRParams", "rmntr", "solve_single_level",
]
__version__ = "0.1.0"
