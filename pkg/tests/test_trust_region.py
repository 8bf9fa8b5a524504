import numpy as np
import pytest

from mlprox.problems import Poisson1DProblem, QuadraticL1Problem
from mlprox.prox import L1, Box, Zero, soft_threshold
from mlprox.smooth import QuadraticObjective
from mlprox.transfer import Level, LevelStack, build_avg_1d
from mlprox import trust_region as trm
from mlprox.trust_region import (
    RECURSIVE,
    TAYLOR,
    CompositeObjective,
    FCDViolation,
    TRParams,
    accept_and_update,
    model_choice,
    rmntr,
    solve_single_level,
)


def test_params_validation():
    TRParams()
    for bad in (
        dict(delta0=0.0),
        dict(eta1=0.5, eta2=0.4),
        dict(gamma1=0.5, gamma2=0.25),
        dict(gamma3=0.9),
        dict(kappa_stop=1.0),
        dict(eps_h=0.0),
        dict(eps_model=1.5),
        dict(fcd_action="ignore"),
    ):
        with pytest.raises(ValueError):
            TRParams(**bad)


def test_accept_and_update_bands():
    p = TRParams()
    u = accept_and_update(1.0, 1.0, 3.0, p)
    assert u.accepted and u.cls == "very_successful" and u.delta == 6.0
    u = accept_and_update(0.0, 1.0, 3.0, p)
    assert not u.accepted and u.cls == "unsuccessful" and u.delta == 0.75
    u = accept_and_update(0.5, 1.0, 3.0, p)
    assert u.accepted and u.cls == "successful" and u.delta == 3.0
    u = accept_and_update(-np.inf, 1.0, 3.0, p)
    assert not u.accepted and u.rho == -np.inf
    with pytest.raises(ValueError):
        accept_and_update(1.0, 0.0, 1.0, p)


def test_model_choice_examples():
    p = TRParams()
    assert model_choice(10.0, 1.0, p, 0) == TAYLOR
    assert model_choice(0.05, 0.1, p, 1) == TAYLOR
    assert model_choice(0.5, 0.1, p, 1, 0.1) == RECURSIVE
    assert model_choice(0.09, 0.1, p, 2, 0.1) == TAYLOR


def test_strongly_convex_quadratic():
    obj = CompositeObjective(QuadraticObjective(np.eye(2), np.zeros(2)), Zero())
    res = solve_single_level(obj, np.array([1.0, 1.0]))
    assert res.converged and res.h <= 1e-7
    assert np.allclose(res.x, 0.0, atol=1e-7)


def test_quadratic_plus_l1_closed_form():
    rng = np.random.default_rng(0)
    a = rng.normal(size=12)
    beta = 0.3
    obj = CompositeObjective(QuadraticObjective(np.eye(12), a), L1(beta))
    res = solve_single_level(obj, np.zeros(12))
    assert res.converged
    assert np.allclose(res.x, soft_threshold(a, beta), atol=1e-8)


def test_infeasible_start_raises():
    obj = CompositeObjective(QuadraticObjective(np.eye(2), np.zeros(2)), Box(0.0, 1.0))
    with pytest.raises(ValueError):
        solve_single_level(obj, np.array([2.0, 0.5]))


def test_rejected_step_keeps_iterate_and_shrinks_radius():
    # A badly scaled model (curvature far below the truth) forces a rejection first.
    class Stiff(QuadraticObjective):
        def curvature(self, x, mode=None):
            from mlprox.smooth import Curvature

            return Curvature(lambda v: 1e-3 * v, self.counters)

    obj = CompositeObjective(Stiff(100.0 * np.eye(3), np.ones(3)), Zero())
    res = solve_single_level(obj, np.zeros(3), TRParams(delta0=10.0, max_iter=50))
    rows = res.trace.rows
    first_bad = next(i for i, r in enumerate(rows) if r.cls == "unsuccessful")
    r, nxt = rows[first_bad], rows[first_bad + 1]
    assert r.rho < 0.05
    assert 0.25 * r.delta <= nxt.delta <= 0.25 * r.delta * (1 + 1e-15)
    assert nxt.F == r.F


def _check_bands(trace, params):
    for prev, nxt in zip(trace.rows, trace.rows[1:]):
        if prev.sequence != nxt.sequence or nxt.level != prev.level:
            continue
        if prev.cls == "very_successful":
            assert prev.rho >= params.eta2
        elif prev.cls == "successful":
            assert params.eta1 <= prev.rho < params.eta2
        else:
            assert prev.rho < params.eta1


def test_two_level_matches_single_level_minimum():
    p = Poisson1DProblem(n=64, beta=1e-3)
    params = TRParams(eps_model=1e-9, eps_model_bottom=1e-9)
    one = rmntr(p.build_stack(1), p.initial_point(), params)
    two = rmntr(p.build_stack(2), p.initial_point(), params)
    assert one.converged and two.converged
    assert two.h <= 1e-7
    assert two.F == pytest.approx(one.F, abs=1e-6)
    assert any(r.kind == RECURSIVE for r in two.trace.rows)
    _check_bands(two.trace, params)


@pytest.mark.parametrize("levels", [2, 3])
def test_coarse_sequences_respect_parent_radius(levels):
    p = Poisson1DProblem(n=64, beta=1e-3)
    params = TRParams(eps_model=1e-9, eps_model_bottom=1e-9, delta0=1e-3)
    res = rmntr(p.build_stack(levels), p.initial_point(), params)
    assert res.converged
    coarse = [s for s in res.trace.sequences if s.parent is not None]
    assert coarse
    for s in coarse:
        assert s.max_dist <= s.delta_up * (1 + 1e-12)
        assert s.successes >= 1
        assert s.status in ("converged", "radius", "budget")
    for r in res.trace.rows:
        assert r.step <= r.delta * (1 + 1e-12)
    # Within a coarse sequence the radius never exceeds what is left of the parent radius.
    for s in coarse:
        rows = [r for r in res.trace.rows if r.sequence == s.index]
        assert all(r.delta <= s.delta_up * (1 + 1e-12) for r in rows)


def test_accepted_values_are_monotone():
    p = QuadraticL1Problem(n=32, beta=0.2)
    res = rmntr(p.build_stack(3), p.initial_point(), TRParams(eps_model=1e-9, eps_model_bottom=1e-9))
    for s in res.trace.sequences:
        vals = np.array(s.accepted_values)
        assert np.all(np.diff(vals) <= 0)


def test_budget_exhaustion_is_reported():
    p = Poisson1DProblem(n=64, beta=1e-3)
    res = rmntr(p.build_stack(1), p.initial_point(), TRParams(max_iter=1))
    assert res.status == "budget" and res.iterations == 1


def test_fcd_violation_aborts(monkeypatch):
    obj = CompositeObjective(QuadraticObjective(np.eye(3), np.ones(3)), Zero())

    def lazy(g, B, phi, x0, delta, params=None, **kw):
        from mlprox.spg import SPGResult

        return SPGResult(x0.copy(), np.asarray(g, float), 0.0, 0, 1.0, 1.0, "lazy")

    monkeypatch.setattr(trm, "spg_solve", lazy)
    with pytest.raises(FCDViolation):
        solve_single_level(obj, np.zeros(3))
    with pytest.warns(RuntimeWarning, match="FCD violated"):
        res = solve_single_level(obj, np.zeros(3), TRParams(fcd_action="warn", max_iter=3))
    assert len(res.trace.fcd_violations) == 3 and res.status == "budget"


def test_trace_sink_receives_rows():
    seen = []
    p = QuadraticL1Problem(n=8)
    res = rmntr(p.build_stack(2), p.initial_point(), sink=seen.append)
    assert seen == res.trace.rows


def test_custom_stack_with_subspace_coarse_level():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(8, 8))
    A = M @ M.T + np.eye(8)
    b = rng.normal(size=8)
    top = QuadraticObjective(A, b)
    stack = LevelStack([Level(4, L1(0.1)), Level(8, L1(0.1), top, build_avg_1d(8))])
    params = TRParams(eps_model_bottom=1e-9)
    res = rmntr(stack, np.zeros(8), params)
    ref = solve_single_level(CompositeObjective(QuadraticObjective(A, b), L1(0.1)), np.zeros(8), params)
    assert res.converged
    assert res.F == pytest.approx(ref.F, abs=1e-10)


def test_default_thresholds_recurse_through_every_level():
    from mlprox.problems import BurgersProblem

    p = BurgersProblem(n=256, seed=0)
    res = rmntr(p.build_stack(3), p.initial_point())
    assert res.converged
    kinds = {(r.level, r.kind) for r in res.trace.rows}
    assert (2, RECURSIVE) in kinds and (1, RECURSIVE) in kinds
    assert len(res.trace.level_rows(0)) > 0
