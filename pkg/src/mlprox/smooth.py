"""Smooth objectives, curvature operators and the level models built from them."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .prox import ProxFunction
from .transfer import TransferOperator

__all__ = [
    "Counters",
    "Curvature",
    "SmoothObjective",
    "QuadraticObjective",
    "LeastSquaresObjective",
    "CoarseSmoothModel",
    "SubspaceObjective",
    "GalerkinObjective",
    "ExtensionByZero",
    "TaylorModel",
    "taylor_decrease",
    "build_coarse_model",
    "make_curvature",
    "CURVATURE_MODES",
]

CURVATURE_MODES = ("exact", "gauss_newton", "fd_gradient")


@dataclass
class Counters:
    """Evaluation counts; one instance is shared by every level of a run."""

    fval: int = 0
    grad: int = 0
    hess: int = 0
    phi: int = 0
    prox: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def reset(self):
        for f in fields(self):
            setattr(self, f.name, 0)


class Curvature:
    """A symmetric operator ``v -> B v`` frozen at one point; each call counts as one ``hess``."""

    def __init__(self, apply, counters: Counters, mode: str = "exact"):
        self._apply = apply
        self.counters = counters
        self.mode = mode

    def __call__(self, v) -> np.ndarray:
        self.counters.hess += 1
        out = self._apply(np.asarray(v, dtype=float))
        return out


class SmoothObjective:
    """Base class: subclasses implement ``_value``, ``_gradient`` and the curvature hooks.

    ``_hess_operator(x)`` and ``_gn_operator(x)`` return callables that apply
    the exact Hessian or the Gauss-Newton matrix at ``x``; problems that
    cache a linearization override these directly instead of ``_hessvec``.
    """

    default_curvature = "exact"

    def __init__(self, dim: int, counters: Counters | None = None):
        self.dim = int(dim)
        self.counters = counters if counters is not None else Counters()

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return x

    def value(self, x) -> float:
        self.counters.fval += 1
        return float(self._value(self._check(x)))

    def gradient(self, x) -> np.ndarray:
        self.counters.grad += 1
        return self._gradient(self._check(x))

    def hessvec(self, x, v) -> np.ndarray:
        return self.curvature(x, "exact")(v)

    def curvature(self, x, mode: str | None = None) -> Curvature:
        mode = mode or self.default_curvature
        x = self._check(x)
        if mode == "exact":
            apply = self._hess_operator(x)
        elif mode == "gauss_newton":
            apply = self._gn_operator(x)
        elif mode == "fd_gradient":
            apply = self._fd_operator(x)
        else:
            raise ValueError(f"unknown curvature mode {mode!r}; expected one of {CURVATURE_MODES}")
        return Curvature(apply, self.counters, mode)

    def _value(self, x) -> float:
        raise NotImplementedError

    def _gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def _hessvec(self, x, v) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no exact Hessian")

    def _hess_operator(self, x):
        return lambda v: self._hessvec(x, v)

    def _gn_operator(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no Gauss-Newton operator")

    def _fd_operator(self, x):
        xnorm = np.linalg.norm(x)

        def apply(v):
            vnorm = np.linalg.norm(v)
            if vnorm == 0:
                return np.zeros_like(v)
            eps = np.sqrt(np.finfo(float).eps) * (1.0 + xnorm) / vnorm
            gp = self.gradient(x + eps * v)
            gm = self.gradient(x - eps * v)
            if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
                raise FloatingPointError("non-finite gradient in finite-difference curvature")
            return (gp - gm) / (2.0 * eps)

        return apply


class QuadraticObjective(SmoothObjective):
    """``0.5 x^T A x - b^T x + c`` with symmetric ``A``."""

    def __init__(self, A, b, c: float = 0.0, counters=None):
        A = np.asarray(A, dtype=float)
        super().__init__(A.shape[0], counters)
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self.c = float(c)

    def _value(self, x):
        return 0.5 * x @ (self.A @ x) - self.b @ x + self.c

    def _gradient(self, x):
        return self.A @ x - self.b

    def _hessvec(self, x, v):
        return self.A @ v


class LeastSquaresObjective(SmoothObjective):
    """``0.5 ||A x - b||^2 + 0.5 alpha ||x||^2``; the Gauss-Newton matrix is exact here."""

    def __init__(self, A, b, alpha: float = 0.0, counters=None):
        A = np.asarray(A, dtype=float)
        super().__init__(A.shape[1], counters)
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self.alpha = float(alpha)

    def _value(self, x):
        r = self.A @ x - self.b
        return 0.5 * r @ r + 0.5 * self.alpha * x @ x

    def _gradient(self, x):
        return self.A.T @ (self.A @ x - self.b) + self.alpha * x

    def _hessvec(self, x, v):
        return self.A.T @ (self.A @ v) + self.alpha * v

    def _gn_operator(self, x):
        return lambda v: self._hessvec(x, v)


class _Wrapped(SmoothObjective):
    """Objectives defined through another one; counting happens in the wrapped object."""

    def value(self, x) -> float:
        return float(self._value(self._check(x)))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(self._check(x))

    @property
    def default_curvature(self):
        return self.base.default_curvature


class CoarseSmoothModel(_Wrapped):
    """``f_c(y) + <v, y - y0>`` with ``v = R g_fine - grad f_c(y0)``.

    The gradient at the anchor is ``R g_fine`` by construction; curvature is
    that of ``f_c``.
    """

    def __init__(self, base: SmoothObjective, correction, anchor):
        super().__init__(base.dim, base.counters)
        self.base = base
        self.correction = np.asarray(correction, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float).copy()

    def _value(self, y):
        return self.base.value(y) + self.correction @ (y - self.anchor)

    def _gradient(self, y):
        return self.base.gradient(y) + self.correction

    def curvature(self, x, mode=None):
        return self.base.curvature(x, mode)


class SubspaceObjective(_Wrapped):
    """``y -> f(x + R^T (y - R x))``: the fine model on the affine coarse subspace through ``x``."""

    def __init__(self, base: SmoothObjective, R: TransferOperator, anchor):
        super().__init__(R.n_coarse, base.counters)
        self.base = base
        self.R = R
        self.anchor = np.asarray(anchor, dtype=float).copy()
        self._r_anchor = R.restrict(self.anchor)

    def lift(self, y):
        return self.anchor + self.R.prolong(y - self._r_anchor)

    def _value(self, y):
        return self.base.value(self.lift(y))

    def _gradient(self, y):
        return self.R.restrict(self.base.gradient(self.lift(y)))

    def curvature(self, x, mode=None):
        x = self._check(x)
        B = self.base.curvature(self.lift(x), mode)
        R = self.R
        return Curvature(lambda v: R.restrict(B._apply(R.prolong(v))), self.counters, B.mode)


class GalerkinObjective(_Wrapped):
    """``y -> f(R^T y)``."""

    def __init__(self, base: SmoothObjective, R: TransferOperator):
        super().__init__(R.n_coarse, base.counters)
        self.base = base
        self.R = R

    def _value(self, y):
        return self.base.value(self.R.prolong(y))

    def _gradient(self, y):
        return self.R.restrict(self.base.gradient(self.R.prolong(y)))

    def curvature(self, x, mode=None):
        x = self._check(x)
        B = self.base.curvature(self.R.prolong(x), mode)
        R = self.R
        return Curvature(lambda v: R.restrict(B._apply(R.prolong(v))), self.counters, B.mode)


class ExtensionByZero(_Wrapped):
    """``y -> f((y, 0, ..., 0))``: the coarse function obtained by padding with zeros."""

    def __init__(self, base: SmoothObjective, n_coarse: int):
        if not 0 < n_coarse <= base.dim:
            raise ValueError("coarse dimension must not exceed the fine one")
        super().__init__(n_coarse, base.counters)
        self.base = base

    def _pad(self, y):
        out = np.zeros(self.base.dim)
        out[: self.dim] = y
        return out

    def _value(self, y):
        return self.base.value(self._pad(y))

    def _gradient(self, y):
        return self.base.gradient(self._pad(y))[: self.dim]

    def curvature(self, x, mode=None):
        B = self.base.curvature(self._pad(self._check(x)), mode)
        n = self.dim
        return Curvature(lambda v: B._apply(self._pad(v))[:n], self.counters, B.mode)


def build_coarse_model(fine_grad, R: TransferOperator, f_coarse: SmoothObjective, x_coarse0) -> CoarseSmoothModel:
    """Coarse smooth model whose gradient at ``x_coarse0`` equals ``R fine_grad``."""
    fine_grad = np.asarray(fine_grad, dtype=float)
    x_coarse0 = np.asarray(x_coarse0, dtype=float)
    if fine_grad.shape != (R.n_fine,) or x_coarse0.shape != (R.n_coarse,):
        raise ValueError("dimension mismatch between gradient, transfer and coarse anchor")
    if f_coarse.dim != R.n_coarse:
        raise ValueError("coarse objective does not match the transfer")
    v = R.restrict(fine_grad) - f_coarse.gradient(x_coarse0)
    return CoarseSmoothModel(f_coarse, v, x_coarse0)


def make_curvature(obj: SmoothObjective, x, mode: str | None = None) -> Curvature:
    return obj.curvature(x, mode)


@dataclass
class TaylorModel:
    """``m(x + s) = f0 + <g, s> + 0.5 <B s, s> + phi(x + s)`` around ``anchor``."""

    anchor: np.ndarray
    f0: float
    g: np.ndarray
    B: Curvature

    def smooth_value(self, s, Bs=None) -> float:
        s = np.asarray(s, dtype=float)
        Bs = self.B(s) if Bs is None else Bs
        return self.f0 + self.g @ s + 0.5 * (Bs @ s)

    def value(self, phi: ProxFunction, s, Bs=None) -> float:
        return self.smooth_value(s, Bs) + phi.value(self.anchor + s)


def taylor_decrease(model: TaylorModel, phi: ProxFunction, s, Bs=None, phi_x=None, phi_trial=None) -> float:
    """``m(x) - m(x+s) = -<g,s> - 0.5 <Bs,s> + phi(x) - phi(x+s)``.

    Already-known ``B s`` and ``phi`` values may be passed to avoid recomputation.
    """
    s = np.asarray(s, dtype=float)
    if not np.any(s):
        return 0.0
    Bs = model.B(s) if Bs is None else Bs
    phi_x = phi.value(model.anchor) if phi_x is None else phi_x
    phi_trial = phi.value(model.anchor + s) if phi_trial is None else phi_trial
    if not np.isfinite(phi_trial):
        return -np.inf
    return float(-(model.g @ s) - 0.5 * (Bs @ s) + phi_x - phi_trial)
