"""Nonsmooth trust-region loop and its recursive multilevel driver."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .prox import ProxFunction, pullback, snap_to_domain
from .smooth import (
    Counters,
    SmoothObjective,
    SubspaceObjective,
    TaylorModel,
    build_coarse_model,
    taylor_decrease,
)
from .spg import SPGParams, spg_solve
from .transfer import Level, LevelStack

__all__ = [
    "TRParams",
    "CompositeObjective",
    "TraceRow",
    "SequenceInfo",
    "TrustRegionTrace",
    "SolveResult",
    "FCDViolation",
    "Update",
    "accept_and_update",
    "model_choice",
    "fcd_constant",
    "rmntr",
    "solve_single_level",
    "TAYLOR",
    "RECURSIVE",
]

log = logging.getLogger("mlprox")

TAYLOR = "taylor"
RECURSIVE = "recursive"
UNSUCCESSFUL = "unsuccessful"
SUCCESSFUL = "successful"
VERY_SUCCESSFUL = "very_successful"

_EPS = np.finfo(float).eps


class FCDViolation(RuntimeError):
    """A computed step failed the fraction-of-Cauchy-decrease bound."""


@dataclass
class TRParams:
    """Trust-region settings shared by all levels.

    ``eps_model`` is the threshold a coarse level's initial stationarity must
    exceed before it is used.  ``None`` means the coarse level's own stopping
    tolerance; a list gives one value per coarse level (coarsest first) and
    ``eps_model_bottom`` overrides the coarsest one.
    """

    delta0: float = 50.0
    eta1: float = 0.05
    eta2: float = 0.95
    gamma1: float = 0.25
    gamma2: float = 0.25
    gamma3: float = 2.0
    kappa_stop: float = 0.6
    eps_model: float | list | None = None
    eps_model_bottom: float | None = None
    eps_h: float = 1e-7
    eps_delta: float = 1e-2
    delta_s: float | None = None
    max_iter: int = 1000
    max_coarse_iter: int = 100
    t0: float = 1.0
    curvature: str | None = None
    freeze_coarse_curvature: bool = True
    fcd_action: str = "raise"
    spg: SPGParams = field(default_factory=SPGParams)

    def __post_init__(self):
        if isinstance(self.spg, dict):
            self.spg = SPGParams(**self.spg)
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not 0 < self.eta1 < self.eta2 < 1:
            raise ValueError("need 0 < eta1 < eta2 < 1")
        if not 0 < self.gamma1 <= self.gamma2 < 1 <= self.gamma3:
            raise ValueError("need 0 < gamma1 <= gamma2 < 1 <= gamma3")
        if not 0 < self.kappa_stop < 1:
            raise ValueError("kappa_stop must lie in (0, 1)")
        for name in ("eps_h", "eps_delta"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.eps_model is None:
            eps = []
        else:
            eps = self.eps_model if isinstance(self.eps_model, (list, tuple)) else [self.eps_model]
        if self.eps_model_bottom is not None:
            eps = list(eps) + [self.eps_model_bottom]
        if not all(0 < e < 1 for e in eps):
            raise ValueError("model-choice thresholds must lie in (0, 1)")
        if self.delta_s is not None and not self.delta_s > 0:
            raise ValueError("delta_s must be positive")
        if self.max_iter < 0 or self.max_coarse_iter < 1:
            raise ValueError("iteration budgets must be positive")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.fcd_action not in ("raise", "warn"):
            raise ValueError("fcd_action must be 'raise' or 'warn'")


@dataclass
class CompositeObjective:
    smooth: SmoothObjective
    phi: ProxFunction

    @property
    def dim(self):
        return self.smooth.dim

    def value(self, x) -> float:
        return self.smooth.value(x) + self.phi.value(x)


@dataclass
class TraceRow:
    level: int
    k: int
    h: float
    delta: float
    rho: float
    kind: str
    cls: str
    F: float
    pred: float = 0.0
    ared: float = 0.0
    step: float = 0.0
    fcd_bound: float = 0.0
    sequence: int = 0

    def csv_fields(self):
        return [self.level, self.k, self.h, self.delta, self.rho, self.kind, self.cls, self.F]


@dataclass
class SequenceInfo:
    """One minimization sequence: the iterations run on a level between entry and return."""

    index: int
    level: int
    parent: int | None
    delta_up: float
    L0: float = 0.0
    Lstar: float = 0.0
    iterations: int = 0
    successes: int = 0
    max_dist: float = 0.0
    status: str = ""
    accepted_values: list = field(default_factory=list)


@dataclass
class TrustRegionTrace:
    rows: list[TraceRow] = field(default_factory=list)
    sequences: list[SequenceInfo] = field(default_factory=list)
    fcd_violations: list[TraceRow] = field(default_factory=list)
    kappa_h: dict = field(default_factory=dict)

    def level_rows(self, level: int) -> list[TraceRow]:
        return [r for r in self.rows if r.level == level]


@dataclass
class SolveResult:
    x: np.ndarray
    F: float
    h: float
    status: str
    iterations: int
    trace: TrustRegionTrace
    counters: Counters

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class Update(NamedTuple):
    accepted: bool
    delta: float
    cls: str
    rho: float


def accept_and_update(ared: float, pred: float, delta: float, params: TRParams, f_scale: float | None = None) -> Update:
    """Ratio test and radius update with the representatives gamma3*D, D and gamma2*D.

    With ``f_scale`` given, an ``ared``/``pred`` pair that is entirely at the
    rounding level of ``F`` counts as agreement (``rho = 1``).
    """
    if not pred > 0:
        raise ValueError(f"predicted reduction must be positive, got {pred}")
    if not np.isfinite(ared):
        rho = -np.inf
    else:
        rho = ared / pred
        if f_scale is not None:
            tol = 100 * _EPS * max(1.0, abs(f_scale))
            if pred <= tol and abs(ared) <= tol:
                rho = 1.0
    if rho >= params.eta2:
        return Update(True, params.gamma3 * delta, VERY_SUCCESSFUL, rho)
    if rho >= params.eta1:
        return Update(True, delta, SUCCESSFUL, rho)
    return Update(False, params.gamma2 * delta, UNSUCCESSFUL, rho)


def model_choice(h_coarse0: float, h_fine: float, params: TRParams, level: int, eps_coarse: float | None = None) -> str:
    """Use the coarse model only if its initial stationarity is large in both senses."""
    if level == 0:
        return TAYLOR
    if eps_coarse is None:
        eps = params.eps_model
        if eps is None:
            eps_coarse = params.eps_h
        else:
            eps_coarse = float(eps[level - 1]) if isinstance(eps, (list, tuple)) else eps
    if h_coarse0 >= params.kappa_stop * h_fine and h_coarse0 >= eps_coarse:
        return RECURSIVE
    return TAYLOR


def fcd_constant(params: TRParams, bnorm_est: float) -> float:
    """``0.5 min{1, t_min kappa_stop^2, kappa_stop^4 / (kappa_H - 1)}`` with ``kappa_H - 1 = ||B||``."""
    terms = [1.0, params.spg.t_min * params.kappa_stop**2]
    if bnorm_est > 0:
        terms.append(params.kappa_stop**4 / bnorm_est)
    return 0.5 * min(terms)


class _Engine:
    def __init__(self, stack: LevelStack, params: TRParams, counters: Counters, sink: Callable | None):
        self.stack = stack
        self.params = params
        self.counters = counters
        self.sink = sink
        self.trace = TrustRegionTrace()
        r = stack.r
        self.eps_h = [0.0] * (r + 1)
        self.eps_h[r] = stack[r].eps_h if stack[r].eps_h is not None else params.eps_h
        for i in range(r - 1, -1, -1):
            lev = stack[i]
            self.eps_h[i] = lev.eps_h if lev.eps_h is not None else max(1e-7, 0.1 * self.eps_h[i + 1])
        self.eps_delta = [lev.eps_delta if lev.eps_delta is not None else params.eps_delta for lev in stack.levels]
        ds = params.delta_s if params.delta_s is not None else params.delta0
        self.delta_s = [lev.delta_s if lev.delta_s is not None else ds for lev in stack.levels]
        self.bnorm = [0.0] * (r + 1)
        # Model-choice threshold for entering level j = i - 1.  By default it is
        # the stopping tolerance of level j, so a coarse sequence is started
        # exactly when it would not stop immediately.
        self.eps_model = []
        for j in range(r):
            if isinstance(params.eps_model, (list, tuple)):
                self.eps_model.append(float(params.eps_model[j]))
            elif j == 0 and params.eps_model_bottom is not None:
                self.eps_model.append(params.eps_model_bottom)
            elif params.eps_model is None:
                self.eps_model.append(self.eps_h[j])
            else:
                self.eps_model.append(params.eps_model)

    def _phi(self, phi, x):
        self.counters.phi += 1
        return phi.value(x)

    def _h(self, g, x, phi):
        self.counters.prox += 1
        t0 = self.params.t0
        return float(np.linalg.norm(x - phi.prox(t0, x - t0 * g)) / t0)

    def _emit(self, row: TraceRow):
        self.trace.rows.append(row)
        log.debug("%d,%d,%.6e,%.6e,%.6e,%s,%s", row.level, row.k, row.h, row.delta, row.rho, row.kind, row.cls)
        if self.sink is not None:
            self.sink(row)

    def solve(self, x0, top_delta=None):
        st = self.stack
        r = st.r
        top = st[r]
        delta0 = self.params.delta0 if top_delta is None else top_delta
        self.delta_s[r] = min(self.delta_s[r], delta0) if top.delta_s is None else self.delta_s[r]
        x, seq, h = self._minimize(r, top.smooth, top.phi, np.asarray(x0, dtype=float), np.inf, None, None)
        self.trace.kappa_h = {i: 1.0 + b for i, b in enumerate(self.bnorm)}
        return x, seq, h

    def _minimize(self, i, smooth, phi, x0, delta_up, B_frozen, parent):
        p = self.params
        st = self.stack
        is_top = i == st.r
        seq = SequenceInfo(len(self.trace.sequences), i, parent, delta_up)
        self.trace.sequences.append(seq)
        budget = p.max_iter if is_top else p.max_coarse_iter
        eps_h = self.eps_h[i]
        eps_delta = self.eps_delta[i]
        delta = min(self.delta_s[i], delta_up)

        x = x0.copy()
        fx = smooth.value(x)
        phix = self._phi(phi, x)
        if not np.isfinite(phix):
            raise ValueError(f"start point on level {i} is outside the domain of phi")
        g = smooth.gradient(x)
        seq.L0 = fx + phix
        seq.accepted_values.append(seq.L0)
        B_here = None
        k = 0
        while True:
            h = self._h(g, x, phi)
            if h <= eps_h:
                seq.status = "converged"
                break
            if k >= budget:
                seq.status = "budget"
                break

            kind = TAYLOR
            if i > 0:
                R = st[i].transfer
                y0 = R.restrict(x)
                gc = R.restrict(g)
                phic = pullback(phi, x, R)
                hc = self._h(gc, y0, phic)
                kind = model_choice(hc, h, p, i, self.eps_model[i - 1])

            if kind == RECURSIVE:
                f_c = st[i - 1].smooth
                if f_c is None:
                    f_c = SubspaceObjective(smooth, R, x)
                cm = build_coarse_model(g, R, f_c, y0)
                Bc = cm.curvature(y0, p.curvature) if p.freeze_coarse_curvature else None
                y_star, sub, _ = self._minimize(i - 1, cm, phic, y0, delta, Bc, seq.index)
                s = R.prolong(y_star - y0)
                pred = sub.L0 - sub.Lstar
            else:
                if B_frozen is not None:
                    Bk = B_frozen
                else:
                    if B_here is None:
                        B_here = smooth.curvature(x, p.curvature)
                    Bk = B_here
                res = spg_solve(g, Bk, phi, x, delta, p.spg, t0=p.t0, phi_x0=phix, counters=self.counters)
                s = res.x - x
                model = TaylorModel(x, fx, g, Bk)
                pred = taylor_decrease(model, phi, s, Bs=res.d - g, phi_x=phix, phi_trial=res.phi_x)
                self.bnorm[i] = max(self.bnorm[i], res.max_rayleigh)

            bound = fcd_constant(p, self.bnorm[i]) * h * min(h / (1.0 + self.bnorm[i]), delta)
            row = TraceRow(i, k, h, delta, np.nan, kind, UNSUCCESSFUL, fx + phix, pred=pred,
                           step=float(np.linalg.norm(s)), fcd_bound=bound, sequence=seq.index)
            fcd_ok = pred >= bound and pred > 0
            if not fcd_ok:
                self.trace.fcd_violations.append(row)
                msg = (f"FCD violated on level {i}, iteration {k}: pred={pred:.3e} < bound={bound:.3e} "
                       f"(h={h:.3e}, delta={delta:.3e}, kind={kind})")
                if p.fcd_action == "raise":
                    raise FCDViolation(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)

            trial = x + s
            if kind == RECURSIVE:
                # Prolonged steps are feasible up to rounding; keep iterates exactly inside.
                trial = snap_to_domain(phi, trial)
            f_trial = smooth.value(trial)
            phi_trial = self._phi(phi, trial)
            if not np.isfinite(phi_trial):
                warnings.warn(f"trial point on level {i} left the domain of phi; step rejected",
                              RuntimeWarning, stacklevel=2)
                ared = -np.inf
            else:
                ared = (fx + phix) - (f_trial + phi_trial)
            if fcd_ok:
                upd = accept_and_update(ared, pred, delta, p, f_scale=fx + phix)
            else:
                upd = Update(False, p.gamma2 * delta, UNSUCCESSFUL, -np.inf)
            if upd.accepted:
                x = trial
                fx, phix = f_trial, phi_trial
                g = smooth.gradient(x)
                B_here = None
                seq.successes += 1
                seq.accepted_values.append(fx + phix)
            row.rho, row.cls, row.F, row.ared = upd.rho, upd.cls, fx + phix, ared
            self._emit(row)
            k += 1
            seq.iterations = k

            dist = float(np.linalg.norm(x - x0))
            seq.max_dist = max(seq.max_dist, dist)
            if not is_top and dist > (1.0 - eps_delta) * delta_up:
                h = np.nan
                seq.status = "radius"
                break
            delta = min(upd.delta, delta_up - dist)

        seq.Lstar = fx + phix
        return x, seq, h


def rmntr(
    stack: LevelStack,
    x0,
    params: TRParams | None = None,
    *,
    counters: Counters | None = None,
    sink: Callable[[TraceRow], None] | None = None,
) -> SolveResult:
    """Minimize the top-level composite objective of ``stack`` from ``x0``."""
    params = params or TRParams()
    top = stack[stack.r]
    counters = counters if counters is not None else top.smooth.counters
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (top.dim,):
        raise ValueError("start point does not match the top level")
    eng = _Engine(stack, params, counters, sink)
    x, seq, h = eng.solve(x0)
    status = "converged" if seq.status == "converged" else "budget"
    return SolveResult(x, seq.Lstar, h, status, seq.iterations, eng.trace, counters)


def solve_single_level(obj: CompositeObjective, x0, params: TRParams | None = None, *, sink=None) -> SolveResult:
    stack = LevelStack([Level(obj.dim, obj.phi, obj.smooth)])
    return rmntr(stack, x0, params, counters=obj.smooth.counters, sink=sink)
