from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from helpers import i1, make_instance
from tasksplit.model import (
    DependencySpec,
    InstanceError,
    Plan,
    PlanError,
    Route,
    Stop,
    SyncType,
    plan_cost,
    plan_objective,
    plan_travel_time,
    sync_params,
)

T = 100


@pytest.mark.parametrize(
    "st_, expected",
    [
        (SyncType.STRICT, (0, 0, 0, 0)),
        (SyncType.LIMIT_START_DIFF, (5, 15, 5, 15)),
        (SyncType.OVERLAP, (0, 30, 0, 20)),
        (SyncType.NO_OVERLAP, (30, T, 20, T)),
        (SyncType.U_BEFORE_V_COMPLETED, (30, T, T, T)),
        (SyncType.V_BEFORE_U_COMPLETED, (T, T, 20, T)),
        (SyncType.U_BEFORE_V_LIMIT, (5, 15, T, T)),
        (SyncType.V_BEFORE_U_LIMIT, (T, T, 5, 15)),
    ],
)
def test_sync_params_rows(st_, expected):
    assert sync_params(st_, 5, 15, d_u=30, d_v=20, horizon=T) == expected


def test_sync_params_rejects_bad_input():
    with pytest.raises(ValueError):
        sync_params("sometimes")
    with pytest.raises(ValueError):
        sync_params(SyncType.LIMIT_START_DIFF, 10, 5, horizon=T)


def test_sync_params_caps_at_horizon():
    assert sync_params(SyncType.NO_OVERLAP, d_u=500, d_v=10, horizon=T) == (T, T, 10, T)


def test_dependency_semantics():
    d = DependencySpec(1, 2, *sync_params(SyncType.NO_OVERLAP, d_u=30, d_v=20, horizon=T))
    assert d.satisfied(0, 30)
    assert d.satisfied(20, 0)
    assert not d.satisfied(0, 10)
    assert d.band(1, T) == (30, T)
    strict = DependencySpec(1, 2, 0, 0, 0, 0)
    assert strict.satisfied(7, 7) and not strict.satisfied(7, 8)
    one_way = DependencySpec(1, 2, *sync_params(SyncType.U_BEFORE_V_COMPLETED, d_u=30, horizon=T))
    assert one_way.band(2, T) is None


def test_dependency_spec_validation():
    with pytest.raises(InstanceError):
        DependencySpec(2, 1, 0, 0, 0, 0)
    with pytest.raises(InstanceError):
        DependencySpec(1, 2, 5, 4, 0, 0)
    with pytest.raises(InstanceError):
        DependencySpec(1, 2, -1, 4, 0, 0)


@given(
    a=st.integers(1, 8),
    b=st.integers(1, 8),
    quad=st.tuples(*[st.integers(0, 50)] * 4).filter(lambda q: q[0] <= q[1] and q[2] <= q[3]),
    tu=st.integers(0, 40),
    tv=st.integers(0, 40),
)
def test_between_is_orientation_free(a, b, quad, tu, tv):
    if a == b:
        return
    d = DependencySpec.between(a, b, quad, 60)
    # quad is written for a -> b: t_b - t_a in [q0, q1] or t_a - t_b in [q2, q3]
    direct = quad[0] <= tv - tu <= quad[1] or quad[2] <= tu - tv <= quad[3]
    t = {a: tu, b: tv}
    assert d.satisfied(t[d.u], t[d.v]) == direct


def test_instance_accessors(inst_i1):
    assert inst_i1.n == 2 and inst_i1.sink == 3
    assert inst_i1.t(1, 2) == 10
    assert inst_i1.available_levels == (3,)
    assert inst_i1.wage(3) == 3


def _visit(d=10, w=(0, 50), quals=(1,), **kw):
    return dict(duration=d, window=list(w), quals=list(quals), **kw)


@pytest.mark.parametrize(
    "visits, path",
    [
        ([_visit(w=(10, 5))], "visits[0].window"),
        ([_visit(w=(0, 95))], "visits[0].window"),
        ([_visit(quals=())], "visits[0].quals"),
        ([_visit(quals=(7,))], "visits[0].quals"),
        ([_visit(d=0)], "visits[0].duration"),
        ([_visit(kind="splittable")], "visits[0]"),
        ([_visit(kind="part", parent=1, part=1)], "visits[0].parent"),
    ],
)
def test_validation_names_the_field(visits, path):
    with pytest.raises(InstanceError) as err:
        make_instance(100, visits, {1: 1}, [(0, 0)] * len(visits))
    assert err.value.path == path


def test_triangle_inequality_enforced():
    from tasksplit.io import instance_from_obj

    obj = {
        "horizon": 100,
        "qualifications": [{"level": 1, "wage": 1}],
        "caregivers": {"1": 1},
        "visits": [dict(_visit(), id=i) for i in (1, 2, 3)],
        "travel": [[0] * 5, [0, 0, 1, 10, 0], [0, 1, 0, 1, 0], [0, 10, 1, 0, 0], [0] * 5],
    }
    with pytest.raises(InstanceError) as err:
        instance_from_obj(obj)
    assert err.value.path == "travel"


def test_plan_cost_i1():
    inst = i1()
    plan = Plan((Route(3, (Stop(2, 0), Stop(1, 30))),))
    # 30 + 20 care + 10 travel = 60 minutes at wage 3
    assert plan_cost(plan, inst) == Fraction(180)
    assert plan_travel_time(plan, inst) == 10
    assert plan_objective(plan, inst, "travel-time") == 10


def test_plan_cost_rejects_unknown_refs():
    inst = i1()
    with pytest.raises(PlanError):
        plan_cost(Plan((Route(3, (Stop(9, 0),)),)), inst)
    with pytest.raises(PlanError):
        plan_cost(Plan((Route(5, (Stop(1, 0),)),)), inst)


def test_plan_equality_ignores_status():
    r = (Route(3, (Stop(1, 0),)),)
    assert Plan(r, status="optimal") == Plan(r)
    assert Plan(r) != Plan((Route(3, (Stop(1, 5),)),))
