import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pacbound.bounds import BoundInputs, BoundReport, bounded_case_bound, optimal_alpha
from pacbound.errors import DivergentMomentError, InvalidInputError, NoFeasiblePointError
from pacbound.optimize import GridSpec, alpha_grid, halving_grid, minimize_bound, num_halvings, two_stage_optimize


def test_grids():
    assert alpha_grid(4) == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert halving_grid(1.0, 3) == (1.0, 0.5, 0.25)
    assert num_halvings(100) == 6 and num_halvings(128) == 7 and num_halvings(2) == 1


def test_halving_grid_shape():
    g = GridSpec.halving(8, 100, lambda a: 1.0 + a)
    pts = g.points()
    assert len(pts) == 9 * 6
    assert g.sigma2_for(0.5) == tuple(1.5 / 2 ** j for j in range(1, 7))


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        GridSpec((1.5,), (1.0,))
    with pytest.raises(InvalidInputError):
        GridSpec((0.5,), (1.0,), ts=(1.0,))
    with pytest.raises(InvalidInputError):
        GridSpec((0.5,), (-1.0,)).points()


def _bounded(kl=3.0, m=500, C=1.0, delta=0.05):
    return lambda p: bounded_case_bound(BoundInputs(m, p["alpha"], delta, kl), C, 0.1)


def test_single_point():
    res = minimize_bound(_bounded(), GridSpec((0.3,), (1.0,)))
    assert res.best_params == {"alpha": 0.3, "sigma2": 1.0}
    assert len(res.full_table) == 1


def test_dense_alpha_grid_near_closed_form():
    kl, m, C, delta = 3.0, 500, 1.0, 0.05
    step = 1000
    res = minimize_bound(_bounded(kl, m, C, delta), GridSpec(alpha_grid(step), (1.0,)))
    a0 = optimal_alpha(kl + math.log(1 / delta), C, m)
    assert abs(res.best_params["alpha"] - a0) <= 1.0 / step


def test_inadmissible_points_excluded():
    def fn(p):
        if p["sigma2"] > 0.5:
            raise DivergentMomentError("outside window")
        return BoundReport({"x": p["sigma2"]})
    res = minimize_bound(fn, GridSpec((0.5,), (1.0, 0.4, 0.2)))
    assert res.best_params["sigma2"] == 0.2
    assert len(res.excluded) == 1 and len(res.full_table) == 2
    with pytest.raises(NoFeasiblePointError):
        minimize_bound(fn, GridSpec((0.5,), (1.0, 0.9)))


def test_nonfinite_total_excluded():
    res = minimize_bound(lambda p: BoundReport({"x": math.inf if p["alpha"] == 0 else 1.0}),
                         GridSpec((0.0, 1.0), (1.0,)))
    assert res.best_params["alpha"] == 1.0 and len(res.excluded) == 1


def test_tie_break_alpha_then_sigma():
    res = minimize_bound(lambda p: BoundReport({"x": 1.0}), GridSpec((0.75, 0.25, 0.5), (2.0, 1.0)))
    assert res.best_params == {"alpha": 0.25, "sigma2": 1.0}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_order_invariance(seed):
    rng = random.Random(seed)
    alphas = [i / 4 for i in range(5)]
    sigmas = [1.0, 0.5, 0.25]
    values = {(a, s): rng.choice([1.0, 2.0, 3.0]) for a in alphas for s in sigmas}
    fn = lambda p: BoundReport({"x": values[(p["alpha"], p["sigma2"])]})
    a = minimize_bound(fn, GridSpec(tuple(alphas), tuple(sigmas)))
    rng.shuffle(alphas)
    rng.shuffle(sigmas)
    b = minimize_bound(fn, GridSpec(tuple(alphas), tuple(sigmas)))
    assert a.best_params == b.best_params
    assert a.best_report.total == min(t for _, t in a.full_table)


def _kl_of_sigma(sigma2):
    return 0.5 * (sigma2 - 1 - math.log(sigma2)) + 2.0


def _two_stage_case(m=400, C=1.0, delta=0.05, kl_fn=_kl_of_sigma, emp_fn=lambda s: 0.1 + s):
    def fn(p):
        return bounded_case_bound(BoundInputs(m, p["alpha"], delta, kl_fn(p["sigma2"])), C, emp_fn(p["sigma2"]))

    def alpha_fn(report):
        return {"alpha": optimal_alpha(report.hyperparams["kl"] + math.log(1 / delta), C, m)}
    return fn, alpha_fn


def test_two_stage_improves_on_stage1():
    fn, alpha_fn = _two_stage_case()
    res = two_stage_optimize(fn, halving_grid(0.5, 8), alpha_fn)
    assert res.stage1.best_params["alpha"] == 0.5
    assert res.best_report.total <= res.stage1.best_report.total
    assert res.best_params["sigma2"] == res.stage1.best_params["sigma2"]
    assert len(res.full_table) == 9


def test_two_stage_constant_kl_matches_joint_grid():
    # with KL and empirical risk flat in sigma^2 the joint optimum over a fine alpha grid
    # can only approach the closed-form stage-2 value from above
    fn, alpha_fn = _two_stage_case(kl_fn=lambda s: 4.0, emp_fn=lambda s: 0.2)
    sig = halving_grid(0.5, 5)
    res = two_stage_optimize(fn, sig, alpha_fn)
    joint = minimize_bound(fn, GridSpec(alpha_grid(10_000), sig))
    assert res.best_report.total <= joint.best_report.total
    assert joint.best_report.total - res.best_report.total <= 1e-6


def test_two_stage_fixed_point():
    C = 4.0
    fn, alpha_fn = _two_stage_case(C=C, kl_fn=lambda s: C ** 2 / 2 - math.log(1 / 0.05), emp_fn=lambda s: 0.0)
    res = two_stage_optimize(fn, (1.0,), alpha_fn)
    assert res.best_params["alpha"] == pytest.approx(0.5, abs=1e-15)
