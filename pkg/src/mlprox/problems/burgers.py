"""Distributed control of the steady viscous Burgers equation on (0, 1).

State: continuous piecewise-linear elements, boundary values u(0)=0 and
u(1)=-1.  Control: piecewise constants on the same uniform mesh.  The state
equation ``-nu u'' + u u' = z + g`` is solved by damped Newton; gradients come
from the discrete adjoint and curvature from the Gauss-Newton operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..prox import L1
from ..smooth import Counters, SmoothObjective
from ..transfer import build_avg_1d
from .base import Problem

__all__ = [
    "NewtonError",
    "NewtonOptions",
    "BurgersNoise",
    "BurgersObjective",
    "BurgersProblem",
    "burgers_forcing",
    "burgers_noise",
    "burgers_objective",
    "full_weighting",
]

# Three-point Gauss rule on [0, 1].
_GX = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
_GW = np.array([5.0, 8.0, 5.0]) / 18.0


class NewtonError(RuntimeError):
    pass


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30


def burgers_forcing(x, nu: float = 0.08):
    x = np.asarray(x, dtype=float)
    return 2.0 * (nu + x**3)


@dataclass
class BurgersNoise:
    step_amp: float = 0.05
    jumps: tuple = (3, 6)
    block_amp: float = 0.05
    n_blocks: int = 4
    block_len: tuple = (0.02, 0.1)
    spike_prob: float = 0.005
    spike_amp: float = 0.2


def burgers_noise(n: int, seed: int, spec: BurgersNoise | None = None) -> np.ndarray:
    """Noisy nodal target ``-x^2 + noise`` on ``n + 1`` nodes; boundary nodes stay exact."""
    spec = spec or BurgersNoise()
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n + 1)
    noise = np.zeros(n + 1)

    k = int(rng.integers(spec.jumps[0], spec.jumps[1] + 1))
    jumps = np.sort(rng.uniform(0.0, 1.0, k))
    levels = rng.uniform(-spec.step_amp, spec.step_amp, k + 1)
    noise += levels[np.searchsorted(jumps, x)]

    for _ in range(spec.n_blocks):
        length = rng.uniform(*spec.block_len)
        start = rng.uniform(0.0, 1.0 - length)
        amp = rng.uniform(-spec.block_amp, spec.block_amp)
        noise[(x >= start) & (x <= start + length)] += amp

    hit = rng.random(n + 1) < spec.spike_prob
    sign = 2.0 * rng.integers(0, 2, n + 1) - 1.0
    noise += np.where(hit, spec.spike_amp * sign, 0.0)

    noise[0] = noise[-1] = 0.0
    return -(x**2) + noise


def full_weighting(v: np.ndarray) -> np.ndarray:
    """Nodal vector on ``n + 1`` nodes to ``n/2 + 1`` nodes; end values are copied."""
    v = np.asarray(v, dtype=float)
    if (v.size - 1) % 2:
        raise ValueError("full weighting needs an even number of cells")
    out = v[::2].copy()
    out[1:-1] = 0.25 * v[1:-2:2] + 0.5 * v[2:-1:2] + 0.25 * v[3::2]
    return out


class BurgersObjective(SmoothObjective):
    """Reduced cost ``0.5 ||S(z) - u_d||_M^2 + 0.5 alpha h ||z||^2`` with ``z = scale * y``.

    ``scale`` converts coarse-level variables (which carry the block-averaging
    weights of the transfers) back into physical control values.
    """

    default_curvature = "gauss_newton"

    def __init__(self, n, target, nu=0.08, alpha=1e-4, scale=1.0, counters=None, newton=None):
        super().__init__(n, counters)
        target = np.asarray(target, dtype=float)
        if target.shape != (n + 1,):
            raise ValueError("target must be nodal with n + 1 entries")
        if n < 2:
            raise ValueError("need at least two cells")
        self.n = n
        self.h = 1.0 / n
        self.nu = nu
        self.alpha = alpha
        self.scale = scale
        self.newton = newton or NewtonOptions()
        self.nodes = np.linspace(0.0, 1.0, n + 1)
        self.target = target
        self.bc = (0.0, -1.0)
        h = self.h
        self.mass = sparse.diags(
            [np.full(n - 2, h / 6), np.full(n - 1, 4 * h / 6), np.full(n - 2, h / 6)], [-1, 0, 1], format="csr"
        )
        # Load of g against the hat functions, exact for the cubic forcing.
        xq = self.nodes[:-1, None] + h * _GX[None, :]
        gq = burgers_forcing(xq, nu) * _GW * h
        load = np.zeros(n + 1)
        load[:-1] += gq @ (1.0 - _GX)
        load[1:] += gq @ _GX
        self.forcing = load[1:-1]
        self._u = -self.nodes[1:-1].copy()
        self._key = None
        self._state = None
        self.newton_iterations = 0

    def _full(self, u_int):
        return np.concatenate(([self.bc[0]], u_int, [self.bc[1]]))

    def control_load(self, z):
        return 0.5 * self.h * (z[:-1] + z[1:])

    def control_load_T(self, lam):
        lf = np.concatenate(([0.0], lam, [0.0]))
        return 0.5 * self.h * (lf[:-1] + lf[1:])

    def residual(self, u_int, z):
        u = self._full(u_int)
        d = np.diff(u)
        ua, ub = u[:-1], u[1:]
        k = self.nu / self.h
        ea = -k * d + d * (2 * ua + ub) / 6
        eb = k * d + d * (ua + 2 * ub) / 6
        G = np.zeros(self.n + 1)
        G[:-1] += ea
        G[1:] += eb
        return G[1:-1] - self.forcing - self.control_load(z)

    def jacobian(self, u_int):
        u = self._full(u_int)
        ua, ub = u[:-1], u[1:]
        k = self.nu / self.h
        jaa = k + (-4 * ua + ub) / 6
        jab = -k + (ua + 2 * ub) / 6
        jba = -k + (-2 * ua - ub) / 6
        jbb = k + (-ua + 4 * ub) / 6
        diag = jbb[:-1] + jaa[1:]
        upper = jab[1:-1]
        lower = jba[1:-1]
        return sparse.diags([lower, diag, upper], [-1, 0, 1], format="csc")

    def solve_state(self, z, u0=None):
        """Damped Newton from ``u0`` (default: the last computed state)."""
        opts = self.newton
        u = (self._u if u0 is None else np.asarray(u0, dtype=float)).copy()
        F = self.residual(u, z)
        nF = np.linalg.norm(F)
        it = 0
        while nF > opts.tol:
            if it >= opts.max_iter:
                raise NewtonError(f"Burgers Newton did not converge: |F|={nF:.3e} after {it} iterations")
            du = splu(self.jacobian(u)).solve(-F)
            lam = 1.0
            for _ in range(opts.max_halvings + 1):
                u_new = u + lam * du
                F_new = self.residual(u_new, z)
                n_new = np.linalg.norm(F_new)
                if n_new < (1 - 1e-4 * lam) * nF or n_new <= opts.tol:
                    break
                lam *= 0.5
            else:
                raise NewtonError(f"Burgers Newton line search failed at |F|={nF:.3e}")
            u, F, nF = u_new, F_new, n_new
            it += 1
        self.newton_iterations += it
        return u, nF

    def _solve(self, y):
        key = y.tobytes()
        if key != self._key:
            z = self.scale * y
            u, res = self.solve_state(z)
            self._u = u
            self._key = key
            self._state = {"z": z, "u": u, "res": res, "lu": None}
        return self._state

    def _lu(self, st):
        if st["lu"] is None:
            st["lu"] = splu(self.jacobian(st["u"]))
        return st["lu"]

    def _value(self, y):
        st = self._solve(y)
        e = st["u"] - self.target[1:-1]
        z = st["z"]
        return 0.5 * e @ (self.mass @ e) + 0.5 * self.alpha * self.h * (z @ z)

    def _gradient(self, y):
        st = self._solve(y)
        e = st["u"] - self.target[1:-1]
        lam = self._lu(st).solve(self.mass @ e, trans="T")
        return self.scale * (self.alpha * self.h * st["z"] + self.control_load_T(lam))

    def _gn_operator(self, y):
        y = y.copy()
        st = self._solve(y)
        lu = self._lu(st)
        w2 = self.scale**2
        ah = self.alpha * self.h

        def apply(v):
            du = lu.solve(self.control_load(v))
            lam = lu.solve(self.mass @ du, trans="T")
            return w2 * (self.control_load_T(lam) + ah * v)

        return apply

    def state(self, y) -> np.ndarray:
        """Full nodal state for control variable ``y``."""
        return self._full(self._solve(np.asarray(y, dtype=float))["u"])


@dataclass
class BurgersProblem(Problem):
    n: int = 8192
    nu: float = 0.08
    alpha: float = 1e-4
    beta: float = 1e-2
    seed: int = 0
    noise: bool = True
    noise_spec: BurgersNoise = field(default_factory=BurgersNoise)
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    name = "burgers"
    label = "Burgers"

    def __post_init__(self):
        if isinstance(self.noise_spec, dict):
            self.noise_spec = BurgersNoise(**self.noise_spec)
        if isinstance(self.newton, dict):
            self.newton = NewtonOptions(**self.newton)
        if self.n < 4 or self.n % 2:
            raise ValueError("Burgers mesh size must be even and at least 4")
        x = np.linspace(0.0, 1.0, self.n + 1)
        self.target = burgers_noise(self.n, self.seed, self.noise_spec) if self.noise else -(x**2)

    def check_levels(self, levels):
        super().check_levels(levels)
        if self.n % (2 ** (levels - 1)) or self.n // 2 ** (levels - 1) < 2:
            raise ValueError(f"n={self.n} cannot be coarsened {levels - 1} times")

    def dim(self, level, levels):
        return self.n // 2 ** (levels - 1 - level)

    def level_target(self, level, levels):
        t = self.target
        for _ in range(levels - 1 - level):
            t = full_weighting(t)
        return t

    def scale(self, level, levels):
        return 2.0 ** (-0.5 * (levels - 1 - level))

    def smooth(self, level, levels, counters):
        return BurgersObjective(
            self.dim(level, levels),
            self.level_target(level, levels),
            self.nu,
            self.alpha,
            self.scale(level, levels),
            counters,
            self.newton,
        )

    def phi(self, level, levels):
        n = self.dim(level, levels)
        return L1(self.beta * self.scale(level, levels) / n, dim=n)

    def transfer(self, level, levels):
        return build_avg_1d(self.dim(level, levels))

    def initial_point(self):
        return np.zeros(self.n)

    def solution_columns(self, x, objective: BurgersObjective | None = None):
        obj = objective or self.smooth(0, 1, Counters())
        u = obj.state(x)
        mid = 0.5 * (obj.nodes[:-1] + obj.nodes[1:])
        return {
            "x": mid,
            "u": 0.5 * (u[:-1] + u[1:]),
            "u_d": 0.5 * (self.target[:-1] + self.target[1:]),
            "z": np.asarray(x, dtype=float),
        }


def burgers_objective(p: BurgersProblem, level: int = 0, levels: int = 1, counters: Counters | None = None):
    """``(smooth, phi)`` on ``level`` of a ``levels``-deep hierarchy (``levels - 1`` is the finest)."""
    p.check_levels(levels)
    return p.smooth(level, levels, counters or Counters()), p.phi(level, levels)
