import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import i1, random_tiny, split_fixture
from tasksplit.milp import (
    HighsBackend,
    LinExpr,
    ModelSpec,
    ScipyBackend,
    SolveMode,
    build_mtz_model,
    build_ti_model,
    encode_plan,
    extract_mtz_plan,
    extract_ti_plan,
    get_backend,
)
from tasksplit.milp.backend import INFEASIBLE, OPTIMAL, relative_gap
from tasksplit.milp.mtz import encode_mtz_plan
from tasksplit.model import plan_cost, plan_travel_time
from tasksplit.preprocess import preprocess
from tasksplit.tigraph import build_ti_graph
from tasksplit.verify import brute_force_optimal, check_plan

BACKENDS = [HighsBackend(), ScipyBackend()]
RAW = SolveMode(preprocessed=False)


def _ti(inst, mode=SolveMode(), scope="star"):
    src = preprocess(inst, interval_scope=scope) if mode.preprocessed else build_ti_graph(inst)
    return build_ti_model(inst, src, mode)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
@pytest.mark.parametrize("kind", ["mtz", "ti-raw", "ti"])
def test_i1_optimum(backend, kind):
    inst = i1()
    if kind == "mtz":
        m, extract = build_mtz_model(inst), extract_mtz_plan
    else:
        m, extract = _ti(inst, RAW if kind == "ti-raw" else SolveMode()), extract_ti_plan
    out = backend.solve(m, 30)
    assert out.status == OPTIMAL
    assert out.objective == pytest.approx(180)
    plan = extract(m, out.x, inst)
    assert check_plan(plan, inst).ok
    assert plan_cost(plan, inst) == 180


def test_i1_travel_time_mode():
    inst = i1()
    for m in (build_mtz_model(inst, mode=SolveMode(objective="travel-time")), _ti(inst, SolveMode(objective="travel-time"))):
        out = HighsBackend().solve(m, 30)
        assert out.objective == pytest.approx(10)


@pytest.mark.parametrize("policy, expect", [("forbid", False), ("force", True)])
@pytest.mark.parametrize("kind", ["mtz", "ti"])
def test_split_policy_fixes_decision(policy, expect, kind):
    inst = split_fixture({1: 1, 3: 2})
    mode = SolveMode(split_policy=policy)
    m = build_mtz_model(inst, mode=mode) if kind == "mtz" else _ti(inst, mode)
    out = HighsBackend().solve(m, 30)
    plan = (extract_mtz_plan if kind == "mtz" else extract_ti_plan)(m, out.x, inst)
    assert plan.splits == {1: expect}
    assert check_plan(plan, inst).ok


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2000))
def test_oracle_plans_encode_exactly(seed):
    inst = random_tiny(seed)
    res = brute_force_optimal(inst)
    if res.plan is None:
        return
    cost = float(res.cost)
    m = _ti(inst, RAW)
    x = encode_plan(res.plan, m, inst)
    assert x is not None
    assert m.violation(x) == []
    assert m.objective_value(x) == pytest.approx(cost)
    mm = build_mtz_model(inst)
    y = encode_mtz_plan(res.plan, mm, inst)
    assert y is not None and mm.violation(y) == []
    assert mm.objective_value(y) == pytest.approx(cost)
    # reduced graph: encoding may be impossible, but never wrong
    mp = _ti(inst)
    z = encode_plan(res.plan, mp, inst)
    if z is not None:
        assert mp.violation(z) == [] and mp.objective_value(z) == pytest.approx(cost)


def test_travel_time_objective_counts_travel():
    inst = random_tiny(4)
    res = brute_force_optimal(inst)
    mode = SolveMode(objective="travel-time", preprocessed=False)
    m = _ti(inst, mode)
    x = encode_plan(res.plan, m, inst)
    assert m.objective_value(x) == pytest.approx(plan_travel_time(res.plan, inst))


def test_model_spec_basics():
    m = ModelSpec("toy")
    a = m.add_var("x", obj=1.0)
    b = m.add_var("x", obj=2.0)
    m.ge(LinExpr.var(a).add(LinExpr.var(b)), 1, family="cover")
    assert m.n_vars == 2 and m.n_rows == 1
    assert m.violation([0, 0]) == ["row:cover#0"]
    assert m.violation([0.5, 0.5])[0].startswith("integrality")
    out = HighsBackend().solve(m, 5)
    assert out.objective == pytest.approx(1.0)
    fixed = m.fix({a: 0})
    assert HighsBackend().solve(fixed, 5).objective == pytest.approx(2.0)
    assert m.summary()["vars"] == 2


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
def test_infeasible_model(backend):
    m = ModelSpec("bad")
    a = m.add_var("x")
    m.ge(LinExpr.var(a), 2)
    assert backend.solve(m, 5).status == INFEASIBLE


def test_backend_selection(monkeypatch):
    monkeypatch.setenv("TASKSPLIT_BACKEND", "scipy")
    assert get_backend().name == "scipy"
    assert get_backend("highs").name == "highs"
    assert not get_backend("scipy").supports_hooks
    with pytest.raises(ValueError):
        get_backend("cbc")


def test_relative_gap():
    assert relative_gap(100, 90) == pytest.approx(0.1)
    assert relative_gap(100, None) is None
    assert relative_gap(0, 0) == 0


def test_hooks_are_called_and_injections_validated():
    inst = random_tiny(13)
    m = _ti(inst)
    seen = {"relax": 0, "inc": 0}

    def on_relaxation(x):
        seen["relax"] += 1
        return np.zeros(m.n_vars)  # infeasible candidate, must be ignored

    def on_incumbent(x):
        seen["inc"] += 1
        return None

    out = HighsBackend().solve(m, 30, on_relaxation=on_relaxation, on_incumbent=on_incumbent)
    assert out.status == OPTIMAL
    assert seen["inc"] >= 1
    assert m.violation(out.x) == []
