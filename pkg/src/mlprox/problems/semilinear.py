"""Control of ``-Lap u + u^3 = z`` on the unit square with homogeneous Dirichlet data.

The mesh splits each of the ``n x n`` square cells into two right triangles.
The state is P1 on that mesh; the control is one constant per square cell,
stored row-major, so the two triangles of a cell share a value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..prox import L1Box
from ..smooth import Counters, SmoothObjective
from ..transfer import build_tensor_2d
from .base import Problem
from .burgers import NewtonError, NewtonOptions

__all__ = ["SemilinearMesh", "SemilinearObjective", "SemilinearProblem", "semilinear_objective"]

# Degree-4 symmetric rule on the reference triangle (barycentric points, weights sum to 1).
_A1, _B1, _W1 = 0.108103018168070, 0.445948490915965, 0.223381589678011
_A2, _B2, _W2 = 0.816847572980459, 0.091576213509771, 0.109951743655322
_QL = np.array(
    [
        [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
        [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
    ]
)
_QW = np.array([_W1] * 3 + [_W2] * 3)


class SemilinearMesh:
    def __init__(self, n: int):
        if n < 2:
            raise ValueError("need at least a 2 x 2 grid")
        self.n = n
        self.h = 1.0 / n
        N = n + 1
        c = np.linspace(0.0, 1.0, N)
        X, Y = np.meshgrid(c, c)  # node (i, j) has index i * N + j, y = c[i], x = c[j]
        self.coords = np.column_stack([X.ravel(), Y.ravel()])
        iy, ix = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        n00 = (iy * N + ix).ravel()
        n10 = n00 + 1
        n01 = n00 + N
        n11 = n01 + 1
        cell = (iy * n + ix).ravel()
        self.tris = np.concatenate([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
        self.tri_cell = np.concatenate([cell, cell])
        self.area = 0.5 * self.h**2
        on_bdry = (X == 0) | (X == 1) | (Y == 0) | (Y == 1)
        self.interior = np.flatnonzero(~on_bdry.ravel())
        self.n_nodes = N * N

        P = self.coords[self.tris]
        gx = np.stack([P[:, 1, 1] - P[:, 2, 1], P[:, 2, 1] - P[:, 0, 1], P[:, 0, 1] - P[:, 1, 1]], axis=1)
        gy = np.stack([P[:, 2, 0] - P[:, 1, 0], P[:, 0, 0] - P[:, 2, 0], P[:, 1, 0] - P[:, 0, 0]], axis=1)
        two_a = 2.0 * self.area
        gx, gy = gx / two_a, gy / two_a
        Kloc = self.area * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])
        Mloc = np.broadcast_to(self.area / 12.0 * (np.ones((3, 3)) + np.eye(3)), Kloc.shape)
        self.rows = np.repeat(self.tris, 3, axis=1).ravel()
        self.cols = np.tile(self.tris, (1, 3)).ravel()
        self.stiff = self._assemble(Kloc)
        self.mass = self._assemble(Mloc)
        cell_load = sparse.csr_matrix(
            (np.full(self.tris.size, self.area / 3.0), (self.tris.ravel(), np.repeat(self.tri_cell, 3))),
            shape=(self.n_nodes, n * n),
        )
        self.control_load = cell_load[self.interior].tocsr()
        self.stiff_int = self.stiff[self.interior][:, self.interior].tocsc()

    def _assemble(self, loc):
        A = sparse.coo_matrix((np.asarray(loc).ravel(), (self.rows, self.cols)), shape=(self.n_nodes,) * 2)
        return A.tocsr()

    def cubic(self, u_full):
        """Nodal vector of ``int u^3 phi_j`` and the matching local Jacobian blocks."""
        uq = u_full[self.tris] @ _QL.T  # (nt, 6)
        wq = self.area * _QW
        r = (wq * uq**3) @ _QL  # (nt, 3)
        vec = np.zeros(self.n_nodes)
        np.add.at(vec, self.tris, r)
        jloc = np.einsum("tq,qa,qb->tab", 3.0 * wq * uq**2, _QL, _QL)
        return vec, jloc


class SemilinearObjective(SmoothObjective):
    """``0.5 ||S(z) - w||_M^2 + 0.5 alpha h^2 ||z||^2`` with ``z = scale * y``."""

    default_curvature = "gauss_newton"

    def __init__(self, n, target, alpha=1e-4, scale=1.0, counters=None, newton=None):
        super().__init__(n * n, counters)
        self.mesh = SemilinearMesh(n)
        target = np.asarray(target, dtype=float)
        if target.shape != (self.mesh.n_nodes,):
            raise ValueError("target must be nodal on the (n+1)^2 grid")
        self.n = n
        self.h = 1.0 / n
        self.target = target
        self.alpha = alpha
        self.scale = scale
        self.newton = newton or NewtonOptions()
        self._u = np.zeros(self.mesh.interior.size)
        self._key = None
        self._state = None

    def _full(self, u_int):
        u = np.zeros(self.mesh.n_nodes)
        u[self.mesh.interior] = u_int
        return u

    def residual(self, u_int, z):
        m = self.mesh
        cub, _ = m.cubic(self._full(u_int))
        return m.stiff_int @ u_int + cub[m.interior] - m.control_load @ z

    def jacobian(self, u_int):
        m = self.mesh
        _, jloc = m.cubic(self._full(u_int))
        Jn = m._assemble(jloc)
        return (m.stiff_int + Jn[m.interior][:, m.interior]).tocsc()

    def solve_state(self, z, u0=None):
        opts = self.newton
        u = (self._u if u0 is None else np.asarray(u0, dtype=float)).copy()
        F = self.residual(u, z)
        nF = np.linalg.norm(F)
        it = 0
        while nF > opts.tol:
            if it >= opts.max_iter:
                raise NewtonError(f"semilinear Newton did not converge: |F|={nF:.3e}")
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
                raise NewtonError(f"semilinear Newton line search failed at |F|={nF:.3e}")
            u, F, nF = u_new, F_new, n_new
            it += 1
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

    def _misfit(self, st):
        e = self._full(st["u"]) - self.target
        return e, self.mesh.mass @ e

    def _value(self, y):
        st = self._solve(y)
        e, Me = self._misfit(st)
        z = st["z"]
        return 0.5 * e @ Me + 0.5 * self.alpha * self.h**2 * (z @ z)

    def _gradient(self, y):
        st = self._solve(y)
        _, Me = self._misfit(st)
        m = self.mesh
        lam = self._lu(st).solve(Me[m.interior], trans="T")
        return self.scale * (self.alpha * self.h**2 * st["z"] + m.control_load.T @ lam)

    def _gn_operator(self, y):
        st = self._solve(y.copy())
        lu = self._lu(st)
        m = self.mesh
        M_int = m.mass[m.interior][:, m.interior].tocsr()
        w2 = self.scale**2
        ah = self.alpha * self.h**2

        def apply(v):
            du = lu.solve(m.control_load @ v)
            lam = lu.solve(M_int @ du, trans="T")
            return w2 * (m.control_load.T @ lam + ah * v)

        return apply

    def state(self, y):
        return self._full(self._solve(np.asarray(y, dtype=float))["u"])


@dataclass
class SemilinearProblem(Problem):
    n: int = 64
    alpha: float = 1e-4
    beta: float = 0.01
    lower: float = -25.0
    upper: float = 25.0
    sigma: float = 0.0
    seed: int = 0
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    name = "semilinear"
    label = "Semilinear"

    def __post_init__(self):
        if isinstance(self.newton, dict):
            self.newton = NewtonOptions(**self.newton)
        if self.n < 2:
            raise ValueError("grid too small")
        N = self.n + 1
        w = -np.ones(N * N)
        if self.sigma > 0:
            w += self.sigma * np.random.default_rng(self.seed).standard_normal(N * N)
        self.target = w

    def check_levels(self, levels):
        super().check_levels(levels)
        if self.n % (2 ** (levels - 1)) or self.n // 2 ** (levels - 1) < 2:
            raise ValueError(f"n={self.n} cannot be coarsened {levels - 1} times")

    def grid(self, level, levels):
        return self.n // 2 ** (levels - 1 - level)

    def dim(self, level, levels):
        return self.grid(level, levels) ** 2

    def scale(self, level, levels):
        return 0.5 ** (levels - 1 - level)

    def level_target(self, level, levels):
        # Nodal injection: coarse nodes are a subset of the fine ones.
        step = 2 ** (levels - 1 - level)
        N = self.n + 1
        return self.target.reshape(N, N)[::step, ::step].ravel().copy()

    def smooth(self, level, levels, counters):
        return SemilinearObjective(
            self.grid(level, levels), self.level_target(level, levels), self.alpha,
            self.scale(level, levels), counters, self.newton,
        )

    def phi(self, level, levels):
        g = self.grid(level, levels)
        s = self.scale(level, levels)
        return L1Box(self.beta * s / g**2, self.lower / s, self.upper / s, dim=g * g)

    def transfer(self, level, levels):
        return build_tensor_2d(self.grid(level, levels), 2)

    def initial_point(self):
        return np.zeros(self.n * self.n)

    def solution_columns(self, x, objective: SemilinearObjective | None = None):
        obj = objective or self.smooth(0, 1, Counters())
        u = obj.state(x)
        n = self.n
        c = (np.arange(n) + 0.5) / n
        Yc, Xc = np.meshgrid(c, c, indexing="ij")
        N = n + 1
        U = u.reshape(N, N)
        # Mean of the P1 state over the two triangles of each cell.
        uc = (2 * U[:-1, :-1] + U[:-1, 1:] + U[1:, :-1] + 2 * U[1:, 1:]) / 6.0
        return {"x": Xc.ravel(), "y": Yc.ravel(), "u": uc.ravel(), "z": np.asarray(x, dtype=float)}


def semilinear_objective(p: SemilinearProblem, level: int = 0, levels: int = 1, counters: Counters | None = None):
    p.check_levels(levels)
    return p.smooth(level, levels, counters or Counters()), p.phi(level, levels)
