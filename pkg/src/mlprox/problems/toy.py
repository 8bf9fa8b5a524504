"""Small convex problems with known structure, used for smoke tests and as oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..prox import L1
from ..smooth import QuadraticObjective
from ..transfer import build_avg_1d
from .base import Problem

__all__ = ["QuadraticL1Problem", "Poisson1DProblem", "poisson1d_quadratic"]


@dataclass
class QuadraticL1Problem(Problem):
    """``0.5 ||x - a||^2 + beta ||x||_1``; the minimizer is ``soft_threshold(a, beta)``."""

    n: int = 16
    beta: float = 0.1
    seed: int = 0

    name = "quadratic_l1"
    label = "Quadratic"

    def __post_init__(self):
        self.a = np.random.default_rng(self.seed).standard_normal(self.n)

    def check_levels(self, levels):
        super().check_levels(levels)
        if self.n % 2 ** (levels - 1):
            raise ValueError("n not divisible by the coarsening")

    def dim(self, level, levels):
        return self.n // 2 ** (levels - 1 - level)

    def smooth(self, level, levels, counters):
        if level < levels - 1:
            return None
        I = np.eye(self.n)
        return QuadraticObjective(I, self.a, 0.5 * self.a @ self.a, counters)

    def phi(self, level, levels):
        return L1(self.beta, dim=self.dim(level, levels))

    def transfer(self, level, levels):
        return build_avg_1d(self.dim(level, levels))

    def initial_point(self):
        return np.zeros(self.n)


def poisson1d_quadratic(n, target, alpha, scale=1.0, counters=None) -> QuadraticObjective:
    """Reduced quadratic for ``-u'' = z`` on (0, 1), zero boundary values, P1 state, P0 control.

    Cost ``0.5 ||u - d||_M^2 + 0.5 alpha h ||z||^2`` with ``z = scale * y``.
    """
    h = 1.0 / n
    K = sparse.diags([np.full(n - 2, -1 / h), np.full(n - 1, 2 / h), np.full(n - 2, -1 / h)], [-1, 0, 1], format="csc")
    M = sparse.diags([np.full(n - 2, h / 6), np.full(n - 1, 4 * h / 6), np.full(n - 2, h / 6)], [-1, 0, 1], format="csr")
    B = sparse.diags([np.full(n - 1, h / 2), np.full(n - 1, h / 2)], [0, 1], shape=(n - 1, n), format="csr")
    S = splu(K).solve(B.toarray()) * scale  # du/dy
    d = np.asarray(target, dtype=float)[1:-1]
    A = S.T @ (M @ S) + alpha * h * scale**2 * np.eye(n)
    A = 0.5 * (A + A.T)
    b = S.T @ (M @ d)
    c = 0.5 * d @ (M @ d)
    return QuadraticObjective(A, b, c, counters)


@dataclass
class Poisson1DProblem(Problem):
    """Linear-quadratic control of ``-u'' = z`` with an L1 control cost and rediscretized coarse levels."""

    n: int = 64
    alpha: float = 1e-4
    beta: float = 1e-3
    seed: int = 0

    name = "poisson1d"
    label = "Poisson1D"

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError("n must be even and at least 4")
        x = np.linspace(0.0, 1.0, self.n + 1)
        self.target = np.sin(np.pi * x) * (1 + 0.5 * np.sin(6 * np.pi * x)) / 20.0

    def check_levels(self, levels):
        super().check_levels(levels)
        if self.n % 2 ** (levels - 1) or self.n // 2 ** (levels - 1) < 2:
            raise ValueError("n not divisible by the coarsening")

    def dim(self, level, levels):
        return self.n // 2 ** (levels - 1 - level)

    def smooth(self, level, levels, counters):
        k = levels - 1 - level
        step = 2**k
        return poisson1d_quadratic(self.dim(level, levels), self.target[::step], self.alpha, 2.0 ** (-0.5 * k), counters)

    def phi(self, level, levels):
        k = levels - 1 - level
        n = self.dim(level, levels)
        return L1(self.beta * 2.0 ** (-0.5 * k) / n, dim=n)

    def transfer(self, level, levels):
        return build_avg_1d(self.dim(level, levels))

    def initial_point(self):
        return np.zeros(self.n)
