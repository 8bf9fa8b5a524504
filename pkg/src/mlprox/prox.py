"""Nonsmooth terms: values, proximal maps and the pulled-back coarse term.

Every concrete term here is coordinate-separable, which is what makes the
pulled-back coarse term tractable: for a block-averaging transfer each coarse
coordinate owns a disjoint set of fine coordinates, so the coarse prox splits
into independent one-dimensional convex problems that can be solved exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transfer import TransferOperator

__all__ = [
    "ProxFunction",
    "Zero",
    "L1",
    "Box",
    "L1Box",
    "PulledBack",
    "phi_eval",
    "prox",
    "pullback",
    "prox_pullback",
    "stationarity_h",
    "soft_threshold",
    "from_descriptor",
]


_FEAS_RTOL = 1e-12


def soft_threshold(y, tau):
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {x.shape}")
    return x


class ProxFunction:
    """Convex, possibly extended-valued term ``phi`` with an exact prox."""

    kind = "abstract"
    separable = False
    dim: int | None = None

    def value(self, x) -> float:
        raise NotImplementedError

    def prox(self, t: float, y) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = _as_vector(x)
        if self.dim is not None and x.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: {self.kind} expects {self.dim}, got {x.shape[0]}")
        return x

    @staticmethod
    def _check_t(t):
        if not t > 0:
            raise ValueError(f"prox step must be positive, got {t}")


class _Separable(ProxFunction):
    """``sum_j beta_j |x_j| + indicator(lo_j <= x_j <= hi_j)``.

    ``beta``, ``lo`` and ``hi`` may be scalars or per-coordinate arrays.
    """

    separable = True

    def __init__(self, beta=0.0, lo=-np.inf, hi=np.inf, dim=None):
        beta = np.asarray(beta, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(beta < 0):
            raise ValueError("L1 weight must be nonnegative")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        for a in (beta, lo, hi):
            if a.ndim > 1:
                raise ValueError("coefficients must be scalars or vectors")
            if a.ndim == 1:
                if dim is None:
                    dim = a.shape[0]
                elif a.shape[0] != dim:
                    raise ValueError("coefficient length does not match dimension")
        self.beta, self.lo, self.hi, self.dim = beta, lo, hi, dim

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"

    def coefficients(self, n: int):
        """Per-coordinate ``(beta, lo, hi)`` broadcast to length ``n``."""
        return (
            np.broadcast_to(self.beta, (n,)),
            np.broadcast_to(self.lo, (n,)),
            np.broadcast_to(self.hi, (n,)),
        )

    def value(self, x) -> float:
        x = self._check(x)
        b, lo, hi = self.coefficients(x.shape[0])
        # Points a few ulps outside the box count as feasible: prolonged steps are
        # feasible in exact arithmetic but can round just past a bound.
        if np.any(x < lo - _FEAS_RTOL * np.maximum(1.0, np.abs(lo))) or np.any(
            x > hi + _FEAS_RTOL * np.maximum(1.0, np.abs(hi))
        ):
            return np.inf
        return float(np.sum(b * np.abs(x)))

    def prox(self, t, y) -> np.ndarray:
        self._check_t(t)
        y = self._check(y)
        # Exact for separable L1 + box: the box prox is a projection applied after shrinkage.
        return np.clip(soft_threshold(y, t * self.beta), self.lo, self.hi)


class Zero(ProxFunction):
    kind = "zero"
    separable = True

    def __init__(self, dim=None):
        self.dim = dim

    def __repr__(self):
        return "Zero()"

    def value(self, x) -> float:
        self._check(x)
        return 0.0

    def prox(self, t, y) -> np.ndarray:
        self._check_t(t)
        return self._check(y).copy()

    def coefficients(self, n):
        return np.zeros(n), np.full(n, -np.inf), np.full(n, np.inf)

    def to_dict(self):
        return {"kind": "zero"}


class L1(_Separable):
    kind = "l1"

    def __init__(self, beta=0.0, dim=None):
        super().__init__(beta, -np.inf, np.inf, dim)

    def value(self, x) -> float:
        x = self._check(x)
        return float(np.sum(self.beta * np.abs(x)))

    def prox(self, t, y):
        self._check_t(t)
        return soft_threshold(self._check(y), t * self.beta)

    def to_dict(self):
        return {"kind": "l1", "beta": _jsonable(self.beta)}


class Box(_Separable):
    kind = "box"

    def __init__(self, lo=-np.inf, hi=np.inf, dim=None):
        super().__init__(0.0, lo, hi, dim)

    def to_dict(self):
        return {"kind": "box", "lo": _jsonable(self.lo), "hi": _jsonable(self.hi)}


class L1Box(_Separable):
    kind = "l1box"

    def to_dict(self):
        return {
            "kind": "l1box",
            "beta": _jsonable(self.beta),
            "lo": _jsonable(self.lo),
            "hi": _jsonable(self.hi),
        }


def _jsonable(v):
    a = np.asarray(v, dtype=float)
    return float(a) if a.ndim == 0 else a.tolist()


@dataclass(frozen=True, eq=False)
class PulledBack(ProxFunction):
    """Coarse term ``w -> base(anchor + R^T (w - R anchor))``.

    ``base`` is always a separable fine-level term and ``transfer`` the
    composite restriction from that fine level, so pulling back a pulled-back
    term never nests.
    """

    base: ProxFunction
    anchor: np.ndarray
    transfer: TransferOperator
    _r_anchor: np.ndarray = field(init=False, repr=False)
    kind = "pulledback"
    separable = False

    def __post_init__(self):
        if not getattr(self.base, "separable", False):
            raise ValueError("pullback requires a coordinate-separable parent term")
        anchor = _as_vector(self.anchor)
        if anchor.shape[0] != self.transfer.n_fine:
            raise ValueError("anchor does not live on the transfer's fine space")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "_r_anchor", self.transfer.restrict(anchor))

    @property
    def dim(self):
        return self.transfer.n_coarse

    def lift(self, w) -> np.ndarray:
        """Fine point ``anchor + R^T (w - R anchor)``."""
        w = self._check(w)
        return self.anchor + self.transfer.prolong(w - self._r_anchor)

    def value(self, w) -> float:
        return self.base.value(self.lift(w))

    def prox(self, t, y) -> np.ndarray:
        self._check_t(t)
        y = self._check(y)
        if isinstance(self.base, Zero):
            return y.copy()
        R = self.transfer
        blocks = R.blocks
        wt = R.weight
        beta, lo, hi = self.base.coefficients(R.n_fine)
        c = self.anchor[blocks]
        r = self._r_anchor[:, None]

        # Interval of w keeping every fine coordinate of the block inside the box.
        with np.errstate(invalid="ignore"):
            w_lo = np.max(r + (lo[blocks] - c) / wt, axis=1)
            w_hi = np.min(r + (hi[blocks] - c) / wt, axis=1)
        slack = _FEAS_RTOL * np.maximum(1.0, np.maximum(np.abs(w_lo), np.abs(w_hi)))
        if np.any(w_lo > w_hi + slack):
            raise ValueError("pulled-back term has empty domain: anchor violates the box")
        w_hi = np.maximum(w_hi, w_lo)

        slopes = beta[blocks] * wt
        if not np.any(slopes):
            return np.clip(y, w_lo, w_hi)

        # Kinks of the piecewise-linear part, where a fine coordinate crosses 0.
        kinks = r - c / wt
        order = np.argsort(kinks, axis=1, kind="stable")
        kinks = np.take_along_axis(kinks, order, axis=1)
        slopes = np.take_along_axis(slopes, order, axis=1)
        nc, m = kinks.shape
        prefix = np.zeros((nc, m + 1))
        np.cumsum(slopes, axis=1, out=prefix[:, 1:])
        total = prefix[:, -1:]
        # On piece p (p kinks to the left) the derivative of the L1 part is 2*prefix_p - total.
        cand = y[:, None] - t * (2.0 * prefix - total)
        lower = np.concatenate([np.full((nc, 1), -np.inf), kinks], axis=1)
        upper = np.concatenate([kinks, np.full((nc, 1), np.inf)], axis=1)
        # Pieces whose stationary point lies right of the piece form a prefix.
        p = np.sum(cand > upper, axis=1)
        rows = np.arange(nc)
        w = np.clip(cand[rows, p], lower[rows, p], upper[rows, p])
        return np.clip(w, w_lo, w_hi)

    def to_dict(self):
        raise TypeError("pulled-back terms are built internally and are not serializable")


def phi_eval(phi: ProxFunction, x) -> float:
    return phi.value(x)


def prox(phi: ProxFunction, t: float, y) -> np.ndarray:
    return phi.prox(t, y)


def pullback(parent: ProxFunction, c, R: TransferOperator) -> ProxFunction:
    """The coarse term induced by ``parent`` around the fine anchor ``c``."""
    c = _as_vector(c)
    if isinstance(parent, PulledBack):
        composite = parent.transfer.compose(R)
        fine_anchor = parent.anchor + parent.transfer.prolong(c - parent._r_anchor)
        return PulledBack(parent.base, fine_anchor, composite)
    if isinstance(parent, Zero):
        return Zero(dim=R.n_coarse)
    if not parent.separable:
        raise ValueError(f"cannot pull back non-separable term {parent.kind!r}")
    return PulledBack(parent, c, R)


def snap_to_domain(phi: ProxFunction, x) -> np.ndarray:
    """Clip ``x`` onto the box of a separable term; other terms return ``x`` unchanged."""
    x = _as_vector(x)
    if not getattr(phi, "separable", False) or isinstance(phi, Zero):
        return x
    _, lo, hi = phi.coefficients(x.shape[0])
    return np.clip(x, lo, hi)


def prox_pullback(parent: ProxFunction, c, R: TransferOperator, t: float, y) -> np.ndarray:
    return pullback(parent, c, R).prox(t, y)


def stationarity_h(grad, x, phi: ProxFunction, t0: float = 1.0) -> float:
    """``||x - prox(t0, x - t0*grad)|| / t0``; zero exactly at stationary points."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    x = _as_vector(x)
    grad = _as_vector(grad)
    if grad.shape != x.shape:
        raise ValueError("gradient and point differ in dimension")
    return float(np.linalg.norm(x - phi.prox(t0, x - t0 * grad)) / t0)


def from_descriptor(desc: dict, dim: int | None = None) -> ProxFunction:
    """Build a term from ``{"kind": "l1", "beta": 0.01}``-style descriptors."""
    desc = dict(desc)
    kind = desc.pop("kind", None)
    allowed = {"zero": set(), "l1": {"beta"}, "box": {"lo", "hi"}, "l1box": {"beta", "lo", "hi"}}
    if kind not in allowed:
        raise ValueError(f"unknown nonsmooth kind {kind!r}")
    extra = set(desc) - allowed[kind]
    if extra:
        raise ValueError(f"unexpected keys for {kind!r}: {sorted(extra)}")
    if kind == "zero":
        return Zero(dim=dim)
    if kind == "l1":
        return L1(desc.get("beta", 0.0), dim=dim)
    if kind == "box":
        return Box(desc.get("lo", -np.inf), desc.get("hi", np.inf), dim=dim)
    return L1Box(desc.get("beta", 0.0), desc.get("lo", -np.inf), desc.get("hi", np.inf), dim=dim)
