"""Benchmark problem families and a name-based factory."""
from __future__ import annotations

import dataclasses

from .base import Problem
from .burgers import BurgersNoise, BurgersProblem, burgers_forcing, burgers_noise, burgers_objective
from .pinn import PinnProblem, pinn_objective
from .semilinear import SemilinearProblem, semilinear_objective
from .toy import Poisson1DProblem, QuadraticL1Problem

__all__ = [
    "Problem",
    "BurgersProblem",
    "BurgersNoise",
    "SemilinearProblem",
    "PinnProblem",
    "Poisson1DProblem",
    "QuadraticL1Problem",
    "PROBLEMS",
    "make_problem",
    "burgers_forcing",
    "burgers_noise",
    "burgers_objective",
    "semilinear_objective",
    "pinn_objective",
]

PROBLEMS = {
    cls.name: cls
    for cls in (BurgersProblem, SemilinearProblem, PinnProblem, Poisson1DProblem, QuadraticL1Problem)
}


def make_problem(name: str, **options) -> Problem:
    """Instantiate a registered problem; unknown option names are rejected."""
    try:
        cls = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    allowed = {f.name for f in dataclasses.fields(cls)}
    extra = set(options) - allowed
    if extra:
        raise ValueError(f"unknown options for {name!r}: {sorted(extra)}")
    return cls(**options)
