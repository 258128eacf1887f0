import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import i1, random_incumbent, random_tiny
from tasksplit.heuristics import (
    HeuristicBudget,
    heuristic_subgraph,
    improve_timing,
    mtz_primal_heuristic,
    projected_arcs,
    ti_primal_heuristic,
    _arc_values,
)
from tasksplit.milp import HighsBackend, SolveMode, build_ti_model
from tasksplit.model import Plan, Route, Stop, plan_cost, plan_travel_time
from tasksplit.preprocess import preprocess
from tasksplit.verify import brute_force_optimal, check_plan

BE = HighsBackend()


def test_budget_accounting():
    b = HeuristicBudget(0.05)
    assert not b.exhausted
    with b.session():
        time.sleep(0.06)
    assert b.exhausted and b.calls == 1
    b.charge(5)
    assert b.consumed == pytest.approx(0.05)
    assert b.as_dict()["calls"] == 1
    assert HeuristicBudget(-3).total == 0


def test_exhausted_budget_skips_work():
    inst = i1()
    m = build_ti_model(inst, preprocess(inst))
    x = BE.solve_lp(m)
    b = HeuristicBudget(0)
    assert ti_primal_heuristic(x, m, inst, b, BE) is None
    assert mtz_primal_heuristic(x, m, inst, b, BE) is None
    assert b.calls == 0


def _lp(seed):
    inst = random_tiny(seed)
    m = build_ti_model(inst, preprocess(inst))
    return inst, m, BE.solve_lp(m)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 3000))
def test_subgraph_contains_support(seed):
    inst, m, x = _lp(seed)
    if x is None:
        return
    g = m.meta["graph"]
    vals = _arc_values(m, x)
    mask = heuristic_subgraph(g, vals, inst)
    assert np.all(mask[vals > 1e-6])
    for u, v in projected_arcs(m, x, inst):
        assert u == 0 or 1 <= u <= inst.n


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 3000))
def test_primal_heuristics_emit_valid_plans(seed):
    inst, m, x = _lp(seed)
    if x is None:
        return
    for heur in (ti_primal_heuristic, mtz_primal_heuristic):
        plan = heur(x, m, inst, HeuristicBudget(20), BE)
        if plan is not None:
            assert check_plan(plan, inst).ok


def test_i1_heuristics_find_optimum():
    inst = i1()
    m = build_ti_model(inst, preprocess(inst))
    x = BE.solve_lp(m)
    for heur in (ti_primal_heuristic, mtz_primal_heuristic):
        plan = heur(x, m, inst, HeuristicBudget(20), BE)
        assert plan is not None and plan_cost(plan, inst) == 180


def test_improve_timing_removes_idle_time():
    inst = i1()
    slow = Plan((Route(3, (Stop(2, 10), Stop(1, 60))),))
    assert plan_cost(slow, inst) == 3 * 80
    better = improve_timing(slow, inst, backend=BE)
    assert plan_cost(better, inst) == 180 and check_plan(better, inst).ok
    assert improve_timing(better, inst, backend=BE) is better


def test_improve_timing_fixed_routes_keeps_travel():
    inst = random_tiny(31)
    res = brute_force_optimal(inst)
    rng = np.random.default_rng(0)
    inc = random_incumbent(inst, res.plan, rng)
    out = improve_timing(inc, inst, backend=BE, mode=SolveMode(objective="travel-time"), fixed_routes=True)
    assert [r.visits for r in out.routes] == [r.visits for r in inc.routes]
    assert plan_travel_time(out, inst) == plan_travel_time(inc, inst)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 3000), draw=st.integers(0, 1000))
def test_improve_timing_monotone_and_idempotent(seed, draw):
    inst = random_tiny(seed)
    res = brute_force_optimal(inst)
    if res.plan is None:
        return
    inc = random_incumbent(inst, res.plan, np.random.default_rng(draw))
    if inc is None:
        return
    assert check_plan(inc, inst).ok
    once = improve_timing(inc, inst, backend=BE)
    assert check_plan(once, inst).ok
    assert plan_cost(once, inst) <= plan_cost(inc, inst)
    assert plan_cost(once, inst) >= res.cost
    twice = improve_timing(once, inst, backend=BE)
    assert plan_cost(twice, inst) == plan_cost(once, inst)
