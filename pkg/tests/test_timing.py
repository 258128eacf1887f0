import pytest
from hypothesis import given, settings, strategies as st

from helpers import i1, random_tiny
from tasksplit.model import Plan, Route, Stop, plan_cost
from tasksplit.timing import TimingInfeasible, best_timing, earliest_times, optimal_timing, orientations
from tasksplit.verify import brute_force_optimal, check_plan


def test_earliest_times():
    t = earliest_times({1: 0, 2: 0}, {1: 10, 2: 10}, [(1, 2, 3, 5)])
    assert t == {1: 0, 2: 3}
    t = earliest_times({1: 4, 2: 0}, {1: 10, 2: 20}, [(1, 2, 3, 5)])
    assert t == {1: 4, 2: 7}
    with pytest.raises(TimingInfeasible):
        earliest_times({1: 0, 2: 0}, {1: 10, 2: 2}, [(1, 2, 3, 5)])


def test_i1_timing_removes_waiting():
    inst = i1()
    # 1 then 2: 1 at 0 ends 30, travel 10, 2 at 40
    t = optimal_timing(inst, [(3, [1, 2])], {})
    assert t[2] - t[1] == 40
    plan = Plan((Route(3, tuple(Stop(v, t[v]) for v in (1, 2))),))
    assert plan_cost(plan, inst) == 180


def test_orientations_preferred_first():
    inst = random_tiny(11, n_deps=2)
    performed = {v.id for v in inst.visits}
    os_ = list(orientations(inst, performed))
    active = [d for d in inst.dependencies if d.u in performed and d.v in performed]
    assert len(os_) == 2 ** len(active)
    assert all(o[k] == k[0] for o in os_[:1] for k in o)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 3000))
def test_best_timing_matches_oracle_routes(seed):
    inst = random_tiny(seed)
    res = brute_force_optimal(inst)
    if res.plan is None:
        return
    routes = [(r.qual, r.visits) for r in res.plan.routes]
    t = best_timing(inst, routes, exhaustive=True)
    assert t is not None
    plan = Plan(tuple(Route(q, tuple(Stop(v, t[v]) for v in seq)) for q, seq in routes), res.plan.splits)
    assert check_plan(plan, inst).ok
    assert plan_cost(plan, inst) == res.cost
