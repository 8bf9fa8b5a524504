"""Physics-informed training of a one-hidden-layer sigmoid network.

The network ``N(w) = sum_j a_j s(W_j . w + b_j) (+ c)`` approximates the
solution of ``-div(kappa grad u) = g`` on the unit square with zero boundary
values.  The loss is the mean squared PDE residual at interior collocation
points plus the mean squared network output at boundary points.

Parameters are flattened as ``(W row-major, b, a[, c])``.  Input derivatives of
the network are analytic and the Jacobian of the residual vector with respect
to the parameters is assembled explicitly.  The exact Hessian is the
Gauss-Newton part plus a block-diagonal second-order part (one block per
neuron) obtained with complex steps through the holomorphic residual code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..prox import L1
from ..smooth import Counters, GalerkinObjective, SmoothObjective
from ..transfer import build_avg_1d
from .base import Problem

__all__ = [
    "PinnObjective",
    "PinnProblem",
    "pinn_objective",
    "pinn_kappa",
    "pinn_kappa_grad",
    "pinn_exact",
    "pinn_forcing",
    "sigmoid_derivs",
    "collocation_grid",
]

_TWO_PI = 2.0 * np.pi


def pinn_kappa(x, y):
    return 1.1 + 0.2 * np.sin(_TWO_PI * x) * np.cos(_TWO_PI * y)


def pinn_kappa_grad(x, y):
    kx = 0.2 * _TWO_PI * np.cos(_TWO_PI * x) * np.cos(_TWO_PI * y)
    ky = -0.2 * _TWO_PI * np.sin(_TWO_PI * x) * np.sin(_TWO_PI * y)
    return kx, ky


def pinn_exact(x, y):
    q = 1.0 + 0.25 * np.sin(_TWO_PI * x) * np.sin(_TWO_PI * y) + 0.1 * x * y
    return x * (1 - x) * y * (1 - y) * q


def pinn_forcing(x, y):
    """``g = -div(kappa grad u*)`` for the reference solution, by the product rule."""
    X, Xp, Xpp = x * (1 - x), 1 - 2 * x, -2.0
    Y, Yp, Ypp = y * (1 - y), 1 - 2 * y, -2.0
    sx, cx = np.sin(_TWO_PI * x), np.cos(_TWO_PI * x)
    sy, cy = np.sin(_TWO_PI * y), np.cos(_TWO_PI * y)
    q = 1.0 + 0.25 * sx * sy + 0.1 * x * y
    qx = 0.25 * _TWO_PI * cx * sy + 0.1 * y
    qy = 0.25 * _TWO_PI * sx * cy + 0.1 * x
    qxx = -0.25 * _TWO_PI**2 * sx * sy
    qyy = qxx
    ux = Xp * Y * q + X * Y * qx
    uy = X * Yp * q + X * Y * qy
    uxx = Xpp * Y * q + 2 * Xp * Y * qx + X * Y * qxx
    uyy = X * Ypp * q + 2 * X * Yp * qy + X * Y * qyy
    kx, ky = pinn_kappa_grad(x, y)
    return -(pinn_kappa(x, y) * (uxx + uyy) + kx * ux + ky * uy)


def sigmoid_derivs(z):
    """``s`` and its first three derivatives; valid for complex arguments."""
    s = 0.5 * (1.0 + np.tanh(0.5 * z))
    s1 = s * (1 - s)
    s2 = s1 * (1 - 2 * s)
    s3 = s1 * (1 - 6 * s + 6 * s * s)
    return s, s1, s2, s3


def collocation_grid(m: int = 32):
    """Interior and boundary points of the uniform ``m x m`` grid on the closed unit square."""
    c = np.linspace(0.0, 1.0, m)
    X, Y = np.meshgrid(c, c, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    bd = (X == 0) | (X == 1) | (Y == 0) | (Y == 1)
    return P[~bd.ravel()], P[bd.ravel()]


class PinnObjective(SmoothObjective):
    """Least-squares PINN loss ``0.5 ||rho(theta)||^2``."""

    default_curvature = "exact"

    def __init__(self, width=60, grid=32, output_bias=False, counters=None):
        self.width = width
        self.output_bias = bool(output_bias)
        super().__init__(4 * width + int(self.output_bias), counters)
        self.interior, self.boundary = collocation_grid(grid)
        xi, yi = self.interior.T
        self.kappa = pinn_kappa(xi, yi)
        self.kgrad = np.column_stack(pinn_kappa_grad(xi, yi))
        self.g = pinn_forcing(xi, yi)
        self.w_int = 1.0 / np.sqrt(len(self.interior))
        self.w_bd = 1.0 / np.sqrt(len(self.boundary))
        self._key = None
        self._cache = None

    def unpack(self, theta):
        m = self.width
        W = theta[: 2 * m].reshape(m, 2)
        b = theta[2 * m : 3 * m]
        a = theta[3 * m : 4 * m]
        c = theta[4 * m] if self.output_bias else 0.0
        return W, b, a, c

    def network(self, theta, pts):
        """Network values, gradients and Laplacians at ``pts``."""
        W, b, a, c = self.unpack(np.asarray(theta))
        s, s1, s2, _ = sigmoid_derivs(pts @ W.T + b)
        val = s @ a + c
        grad = (s1 * a) @ W
        lap = s2 @ (a * np.sum(W * W, axis=1))
        return val, grad, lap

    def residuals(self, theta, jac=True):
        """Scaled residual vector and (optionally) its parameter Jacobian."""
        W, b, a, c = self.unpack(theta)
        m = self.width
        Xi, Xb = self.interior, self.boundary
        ww = np.sum(W * W, axis=1)
        kap = self.kappa[:, None]
        s, s1, s2, s3 = sigmoid_derivs(Xi @ W.T + b)
        kw = self.kgrad @ W.T
        psi = -kap * s2 * ww - s1 * kw
        r_int = psi @ a - self.g
        sb, sb1, _, _ = sigmoid_derivs(Xb @ W.T + b)
        r_bd = sb @ a + c
        rho = np.concatenate([self.w_int * r_int, self.w_bd * r_bd])
        if not jac:
            return rho, None

        psi_z = -kap * s3 * ww - s2 * kw
        Ji = np.empty((len(Xi), self.dim), dtype=psi.dtype)
        for k in range(2):
            Ji[:, k : 2 * m : 2] = a * (psi_z * Xi[:, k : k + 1] - 2 * kap * s2 * W[:, k] - s1 * self.kgrad[:, k : k + 1])
        Ji[:, 2 * m : 3 * m] = a * psi_z
        Ji[:, 3 * m : 4 * m] = psi
        Jb = np.empty((len(Xb), self.dim), dtype=sb.dtype)
        for k in range(2):
            Jb[:, k : 2 * m : 2] = a * sb1 * Xb[:, k : k + 1]
        Jb[:, 2 * m : 3 * m] = a * sb1
        Jb[:, 3 * m : 4 * m] = sb
        if self.output_bias:
            Ji[:, 4 * m] = 0.0
            Jb[:, 4 * m] = 1.0
        J = np.vstack([self.w_int * Ji, self.w_bd * Jb])
        return rho, J

    def _eval(self, theta):
        key = theta.tobytes()
        if key != self._key:
            self._cache = self.residuals(theta)
            self._key = key
        return self._cache

    def _value(self, theta):
        rho, _ = self._eval(theta)
        return 0.5 * rho @ rho

    def _gradient(self, theta):
        rho, J = self._eval(theta)
        return J.T @ rho

    def _gn_operator(self, theta):
        _, J = self._eval(theta.copy())
        return lambda v: J.T @ (J @ v)

    def neuron_blocks(self, theta):
        """Second-order part ``sum_i rho_i Hess(rho_i)`` as one 4x4 block per hidden neuron.

        Each residual is a sum of per-neuron terms, so this part of the Hessian
        never couples different neurons.  Perturbing one parameter slot of every
        neuron at once therefore yields one column of every block; four complex
        steps recover all blocks exactly.
        """
        m = self.width
        rho, _ = self._eval(theta)
        slots = self.neuron_slots()
        D = np.empty((m, 4, 4))
        h = 1e-30
        for k in range(4):
            e = np.zeros(self.dim)
            e[slots[:, k]] = 1.0
            _, Jc = self.residuals(theta + 1j * h * e)
            col = np.imag(Jc.T @ rho) / h
            D[:, :, k] = col[slots]
        return D

    def neuron_slots(self):
        m = self.width
        j = np.arange(m)
        return np.column_stack([2 * j, 2 * j + 1, 2 * m + j, 3 * m + j])

    def _hess_operator(self, theta):
        theta = theta.copy()
        _, J = self._eval(theta)
        D = self.neuron_blocks(theta)
        slots = self.neuron_slots()

        def apply(v):
            out = J.T @ (J @ v)
            out[slots] += np.einsum("jab,jb->ja", D, v[slots])
            return out

        return apply

    def hessvec_complex_step(self, theta, v):
        """Reference Hessian-vector product by a complex step on the full gradient."""
        h = 1e-30
        rho, J = self.residuals(np.asarray(theta) + 1j * h * np.asarray(v))
        return np.imag(J.T @ rho) / h


@dataclass
class PinnProblem(Problem):
    width: int = 60
    grid: int = 32
    beta: float = 1e-2
    output_bias: bool = False
    seed: int = 0
    init_scale: float = 1.0
    coarse_model: str = "subspace"

    name = "pinn"
    label = "NNs"

    def __post_init__(self):
        if self.coarse_model not in ("subspace", "galerkin"):
            raise ValueError("coarse_model must be 'subspace' or 'galerkin'")
        self._top = None

    @property
    def n_params(self):
        return 4 * self.width + int(self.output_bias)

    def check_levels(self, levels):
        super().check_levels(levels)
        if self.n_params % (2 ** (levels - 1)):
            raise ValueError(f"{self.n_params} parameters cannot be halved {levels - 1} times")

    def dim(self, level, levels):
        return self.n_params // 2 ** (levels - 1 - level)

    def smooth(self, level, levels, counters):
        if level == levels - 1:
            self._top = PinnObjective(self.width, self.grid, self.output_bias, counters)
            return self._top
        if self.coarse_model == "subspace":
            return None
        R = None
        for j in range(levels - 1, level, -1):
            Rj = self.transfer(j, levels)
            R = Rj if R is None else R.compose(Rj)
        top = self._top if self._top is not None else PinnObjective(self.width, self.grid, self.output_bias, counters)
        return GalerkinObjective(top, R)

    def build_stack(self, levels, counters=None):
        self._top = None
        counters = counters if counters is not None else Counters()
        self.check_levels(levels)
        # Build the top level first so coarse Galerkin levels share its evaluations.
        self.smooth(levels - 1, levels, counters)
        return super().build_stack(levels, counters)

    def phi(self, level, levels):
        return L1(self.beta, dim=self.dim(level, levels))

    def transfer(self, level, levels):
        return build_avg_1d(self.dim(level, levels))

    def initial_point(self):
        rng = np.random.default_rng(self.seed)
        m = self.width
        theta = np.concatenate(
            [
                self.init_scale * rng.standard_normal(2 * m),
                self.init_scale * rng.standard_normal(m),
                self.init_scale * rng.standard_normal(m) / np.sqrt(m),
                np.zeros(int(self.output_bias)),
            ]
        )
        return theta

    def solution_columns(self, x, objective: PinnObjective | None = None):
        obj = objective or PinnObjective(self.width, self.grid, self.output_bias)
        c = np.linspace(0.0, 1.0, self.grid)
        X, Y = np.meshgrid(c, c, indexing="ij")
        P = np.column_stack([X.ravel(), Y.ravel()])
        u, _, _ = obj.network(x, P)
        return {"x": P[:, 0], "y": P[:, 1], "u": u, "u_exact": pinn_exact(P[:, 0], P[:, 1])}


def pinn_objective(p: PinnProblem, level: int = 0, levels: int = 1, counters: Counters | None = None):
    stack = p.build_stack(levels, counters)
    return stack[level].smooth, stack[level].phi
