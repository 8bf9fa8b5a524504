"""Spectral proximal gradient solver for the trust-region subproblem.

Minimizes ``<g, x - x0> + 0.5 <B(x - x0), x - x0> + phi(x)`` over the ball
``||x - x0|| <= delta`` using proximal-gradient steps with a safeguarded
Barzilai-Borwein step length and an exact line search on the quadratic upper
model along each step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .prox import ProxFunction
from .smooth import Counters

__all__ = ["SPGParams", "SPGResult", "spg_solve", "cauchy_alpha", "boundary_alpha"]


@dataclass
class SPGParams:
    maxit: int = 100
    tau_abs: float = 1e-10
    tau_rel: float = 1e-2
    t_min: float = 1e-12
    t_max: float = 1e12
    t_init: float = 1.0

    def __post_init__(self):
        if self.maxit < 1:
            raise ValueError("maxit must be positive")
        if not (self.tau_abs > 0 and self.tau_rel > 0):
            raise ValueError("SPG tolerances must be positive")
        if not 0 < self.t_min <= self.t_max < np.inf:
            raise ValueError("need 0 < t_min <= t_max < inf")
        if not self.t_min <= self.t_init <= self.t_max:
            raise ValueError("initial spectral step must lie in [t_min, t_max]")


@dataclass
class SPGResult:
    x: np.ndarray
    d: np.ndarray  # model gradient g + B (x - x0) at the returned point
    phi_x: float
    iterations: int
    h0: float
    h: float
    reason: str
    max_rayleigh: float = 0.0
    steps: list = field(default_factory=list)


def cauchy_alpha(kappa: float, d_dot_s: float, phi_diff: float, alpha_max: float) -> float:
    """Minimizer of ``0.5 kappa a^2 + a (d_dot_s + phi_diff)`` over ``[0, alpha_max]``."""
    if kappa <= 0:
        return alpha_max
    return max(0.0, min(alpha_max, -(d_dot_s + phi_diff) / kappa))


def boundary_alpha(x, s, x0, delta: float) -> float:
    """Positive root of ``||(x - x0) + a s|| = delta``."""
    s = np.asarray(s, dtype=float)
    ss = s @ s
    if ss == 0:
        raise ValueError("boundary step undefined for s = 0")
    p = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    ps = p @ s
    pp = p @ p
    disc = max(ps * ps + ss * (delta * delta - pp), 0.0)
    root = np.sqrt(disc)
    # Cancellation-free form of (-ps + root) / ss.
    if ps <= 0:
        return (root - ps) / ss
    return max(delta * delta - pp, 0.0) / (root + ps)


def _h(phi, x, d, t0, counters):
    if counters is not None:
        counters.prox += 1
    return float(np.linalg.norm(x - phi.prox(t0, x - t0 * d)) / t0)


def spg_solve(
    g,
    B,
    phi: ProxFunction,
    x0,
    delta: float,
    params: SPGParams | None = None,
    *,
    t0: float = 1.0,
    phi_x0: float | None = None,
    counters: Counters | None = None,
    record: bool = False,
) -> SPGResult:
    """Approximately minimize the quadratic-plus-``phi`` model inside the trust region.

    ``B`` is any callable applying a symmetric operator.  The returned point
    always satisfies ``||x - x0|| <= delta`` (up to rounding on the boundary).
    """
    params = params or SPGParams()
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    x0 = np.asarray(x0, dtype=float)
    x = x0.copy()
    d = np.array(g, dtype=float)
    if phi_x0 is None:
        phi_x0 = phi.value(x0)
        if counters is not None:
            counters.phi += 1
    if not np.isfinite(phi_x0):
        raise ValueError("SPG start point is outside the domain of phi")
    phi_x = phi_x0
    t = params.t_init
    h0 = _h(phi, x, d, t0, counters)
    h = h0
    tol = min(params.tau_abs, params.tau_rel * h0)
    max_rq = 0.0
    steps = []
    reason = "maxit"
    ell = 0
    while ell < params.maxit:
        if h <= tol:
            reason = "stationary"
            break
        if np.linalg.norm(x - x0) > delta:
            reason = "outside"
            break
        p = phi.prox(t, x - t * d)
        if counters is not None:
            counters.prox += 1
        s = p - x
        snorm = np.linalg.norm(s)
        if snorm == 0:
            reason = "stationary"
            break
        alpha_max = 1.0
        if np.linalg.norm(x + s - x0) > delta:
            alpha_max = boundary_alpha(x, s, x0, delta)
        phi_trial = phi.value(x + s)
        b = B(s)
        kappa = float(b @ s)
        if counters is not None:
            counters.phi += 1
        if not (np.isfinite(kappa) and np.all(np.isfinite(b))):
            raise FloatingPointError("non-finite curvature product in SPG")
        max_rq = max(max_rq, abs(kappa) / (snorm * snorm))
        ds = float(d @ s)
        alpha = cauchy_alpha(kappa, ds, phi_trial - phi_x, alpha_max)
        if alpha <= 0:
            reason = "no_progress"
            break
        x_new = x + alpha * s
        d_new = d + alpha * b
        if alpha == 1.0:
            phi_x = phi_trial
        else:
            phi_x = phi.value(x_new)
            if counters is not None:
                counters.phi += 1
        if kappa <= 0:
            dnorm = np.linalg.norm(d)
            if dnorm == 0:
                x, d = x_new, d_new
                ell += 1
                reason = "zero_gradient"
                break
            t_bar = params.t_init / dnorm
        else:
            t_bar = (s @ s) / kappa
        t = max(params.t_min, min(params.t_max, t_bar))
        x, d = x_new, d_new
        ell += 1
        if record:
            steps.append({"alpha": alpha, "alpha_max": alpha_max, "kappa": kappa, "t": t})
        if not np.all(np.isfinite(d)):
            raise FloatingPointError("non-finite model gradient in SPG")
        h = _h(phi, x, d, t0, counters)
        if alpha == alpha_max and alpha_max < 1.0:
            # Step was cut at the trust-region boundary.
            reason = "boundary"
            break
    return SPGResult(x, d, phi_x, ell, h0, h, reason, max_rq, steps)
