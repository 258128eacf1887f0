"""Acceptance criteria 1-9, one PASS/FAIL line each in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import sys
import time
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from helpers import mutation_base, mutations, random_incumbent, random_tiny, split_fixture
from tasksplit.generate import (
    DURATION_DELTAS,
    MIN_PART_DURATION,
    MIN_SPLIT_DURATION,
    draw_split,
    random_base_instance,
    scenario_grid,
)
from tasksplit.heuristics import HeuristicBudget, improve_timing, mtz_primal_heuristic, ti_primal_heuristic
from tasksplit.milp import HighsBackend, SolveMode, build_ti_model
from tasksplit.model import SyncType, VisitKind, plan_cost, plan_travel_time
from tasksplit.preprocess import induced_dependency_table, preprocess
from tasksplit.solve import SolveConfig, solve
from tasksplit.verify import VIOLATION_KINDS, brute_force_optimal, check_plan

BE = HighsBackend()
N_GUARD = 32
WALL = 60.0


def _is_part_pair(inst, d):
    a, b = inst.visit(d.u), inst.visit(d.v)
    return a.kind is VisitKind.PART and b.kind is VisitKind.PART and a.parent == b.parent


@lru_cache(maxsize=None)
def guard_rail_fixtures():
    """Fixture k carries a dependency of sync type k % 8; odd k have a splittable visit."""
    types = list(SyncType)
    out = []
    seed = 5000
    for k in range(N_GUARD):
        while True:
            seed += 1
            try:
                inst = random_tiny(seed, n_split=k % 2, n_deps=1, sync_type=types[k % 8].value)
            except Exception:
                continue
            if any(not _is_part_pair(inst, d) for d in inst.dependencies):
                out.append((types[k % 8], inst))
                break
    return tuple(out)


@lru_cache(maxsize=None)
def oracle(k, objective="cost"):
    return brute_force_optimal(guard_rail_fixtures()[k][1], objective=objective)


def _value(res):
    if res.status == "infeasible":
        return None
    assert res.status == "optimal", res.message or res.status
    return Fraction(res.objective).limit_denominator(1)


def _solve(inst, variant="TI", **mode):
    return solve(inst, SolveConfig(variant=variant, mode=SolveMode(**mode), wall_limit=WALL))


@pytest.mark.criterion(1, "oracle == MTZ == TI on guard-rail instances")
def test_c1_oracle_mtz_ti(report_lines):
    t0 = time.perf_counter()
    fixtures = guard_rail_fixtures()
    assert len(fixtures) >= 25
    assert {t for t, _ in fixtures} == set(SyncType)
    assert any(inst.splittable for _, inst in fixtures) and any(not inst.splittable for _, inst in fixtures)
    feasible = 0
    for k, (_, inst) in enumerate(fixtures):
        assert inst.horizon <= 120 and sum(inst.caregivers.values()) <= 3 and len(inst.originals) <= 6
        o = oracle(k)
        expect = None if o.cost is None else o.cost
        if expect is not None:
            assert expect.denominator == 1
            feasible += 1
        assert _value(_solve(inst, "MTZ")) == expect, f"fixture {k}: MTZ"
        assert _value(_solve(inst, "TI", preprocessed=False)) == expect, f"fixture {k}: TI"
    elapsed = time.perf_counter() - t0
    report_lines.append(f"  c1: {len(fixtures)} fixtures, {feasible} feasible, {elapsed:.0f}s")
    assert feasible >= len(fixtures) // 2
    assert elapsed < 600


@pytest.mark.criterion(2, "raw TI == preprocessed TI")
def test_c2_raw_vs_preprocessed():
    for k, (_, inst) in enumerate(guard_rail_fixtures()):
        raw = _value(_solve(inst, "TI", preprocessed=False))
        assert raw == (None if oracle(k).cost is None else oracle(k).cost)
        pre = _value(_solve(inst, "TI", preprocessed=True))
        assert pre == raw, f"fixture {k}"
        res = solve(inst, SolveConfig(variant="TI", wall_limit=WALL, interval_scope="all"))
        assert _value(res) == raw, f"fixture {k}, all-visit interval reduction"


def _brute_table(uv, vw, T):
    grid = np.arange(4 * T + 1)
    tu, tv, tw = np.meshgrid(grid, grid, grid, indexing="ij")
    d1, d2, D = tv - tu, tw - tv, tw - tu
    out = {}
    for a in (1, 0):
        if a:
            ok1 = (uv[0] < T) & (uv[0] <= d1) & (d1 <= uv[1])
        else:
            ok1 = (uv[2] < T) & (uv[2] <= -d1) & (-d1 <= uv[3])
        for b in (1, 0):
            if b:
                ok2 = (vw[0] < T) & (vw[0] <= d2) & (d2 <= vw[1])
            else:
                ok2 = (vw[2] < T) & (vw[2] <= -d2) & (-d2 <= vw[3])
            out[(a, b)] = {int(d) for d in np.unique(D[ok1 & ok2]) if abs(d) <= T - 1}
    return out


def _table_sets(tab, T):
    out = {}
    for key, (fw, rv) in tab.items():
        s = set()
        if fw != (T, T):
            s |= set(range(fw[0], min(fw[1], T - 1) + 1))
        if rv != (T, T):
            s |= {-d for d in range(rv[0], min(rv[1], T - 1) + 1)}
        out[key] = s
    return out


@pytest.mark.criterion(3, "induced dependency table == brute-force triples")
def test_c3_induced_table():
    rng = np.random.default_rng(0)

    def quad(T):
        q = []
        for _ in range(2):
            if rng.random() < 0.2:
                q += [T, T]
            else:
                lo = int(rng.integers(0, T))
                q += [lo, int(rng.integers(lo, T + 1))]
        return tuple(q)

    mismatches = 0
    for _ in range(1000):
        T = int(rng.integers(4, 9))
        uv, vw = quad(T), quad(T)
        if _brute_table(uv, vw, T) != _table_sets(induced_dependency_table(uv, vw, T), T):
            mismatches += 1
    assert mismatches == 0


@pytest.mark.criterion(4, "split dominance: optimize <= min(forbid, force)")
def test_c4_split_dominance(report_lines):
    inf = float("inf")
    checked = 0
    for k, (_, inst) in enumerate(guard_rail_fixtures()):
        if not inst.splittable:
            continue
        vals = {}
        for policy in ("optimize", "forbid", "force"):
            v = _value(_solve(inst, "TI", split_policy=policy))
            vals[policy] = inf if v is None else v
        assert vals["optimize"] <= min(vals["forbid"], vals["force"]), f"fixture {k}: {vals}"
        checked += 1
    assert checked >= 10
    # splitting lowers cost: the split-off part goes to a cheaper caregiver
    inst = split_fixture({1: 1, 3: 2})
    opt = _solve(inst, "TI", split_policy="optimize")
    forbid = _solve(inst, "TI", split_policy="forbid")
    assert opt.status == forbid.status == "optimal"
    assert opt.objective < forbid.objective
    # and with one level-3 caregiver only splitting makes the plan feasible
    inst = split_fixture()
    assert _solve(inst, "TI", split_policy="forbid").status == "infeasible"
    assert _solve(inst, "TI", split_policy="optimize").status == "optimal"
    report_lines.append(f"  c4: {checked} split fixtures; split fixture cost {forbid.objective:g} -> {opt.objective:g}")


@pytest.mark.criterion(5, "heuristic plans verify; improve_timing monotone and idempotent")
def test_c5_heuristics(report_lines):
    found = {"TI": 0, "MTZ": 0}
    for k, (_, inst) in enumerate(guard_rail_fixtures()):
        m = build_ti_model(inst, preprocess(inst))
        x = BE.solve_lp(m)
        if x is None:
            continue
        for name, heur in (("TI", ti_primal_heuristic), ("MTZ", mtz_primal_heuristic)):
            plan = heur(x, m, inst, HeuristicBudget(30), BE)
            if plan is not None:
                assert check_plan(plan, inst).ok, f"{name} heuristic, fixture {k}"
                found[name] += 1
                better = improve_timing(plan, inst, HeuristicBudget(30), BE)
                assert check_plan(better, inst).ok
    assert found["TI"] > 0 and found["MTZ"] > 0

    rng = np.random.default_rng(7)
    done = improved = 0
    seed = 0
    while done < 100:
        seed += 1
        inst = random_tiny(seed)
        o = brute_force_optimal(inst)
        if o.plan is None:
            continue
        inc = random_incumbent(inst, o.plan, rng)
        if inc is None or not check_plan(inc, inst).ok:
            continue
        once = improve_timing(inc, inst, None, BE)
        assert check_plan(once, inst).ok
        assert plan_cost(once, inst) <= plan_cost(inc, inst)
        twice = improve_timing(once, inst, None, BE)
        assert twice == once
        improved += plan_cost(once, inst) < plan_cost(inc, inst)
        done += 1
    report_lines.append(f"  c5: heuristic plans TI {found['TI']}, MTZ {found['MTZ']}; {improved}/100 incumbents improved")


@pytest.mark.criterion(6, "generator draw frequencies and split durations")
def test_c6_generator_frequencies():
    rng = np.random.default_rng(2024)
    n = 10_000
    durations = rng.choice([75, 90, 105, 120], size=n)
    draws = [draw_split(rng, int(d)) for d in durations]
    tol = 0.02

    def share(pred):
        return sum(1 for d in draws if pred(d)) / n

    for delta in DURATION_DELTAS:
        assert abs(share(lambda d: d.delta == delta) - 1 / 3) <= tol
    assert abs(share(lambda d: d.relax_part is not None) - 0.75) <= tol
    assert abs(share(lambda d: d.window_part is not None) - 0.75) <= tol
    for part in (1, 2):
        assert abs(share(lambda d: d.relax_part == part) - 0.375) <= tol
    for kind in ("none", "precedence", "disjunction"):
        assert abs(share(lambda d: d.dep_type == kind) - 1 / 3) <= tol
    for d, dr in zip(durations, draws):
        assert dr.d1 >= MIN_PART_DURATION and dr.d2 >= MIN_PART_DURATION
        assert dr.d1 + dr.d2 == d + dr.delta
    for dur in range(MIN_SPLIT_DURATION, 75):
        dr = draw_split(rng, dur)
        assert dr.delta == 0 and min(dr.d1, dr.d2) >= MIN_PART_DURATION

    for seed in range(3):
        for inst in scenario_grid(random_base_instance(20, seed), seed):
            for v in inst.visits:
                if v.kind is VisitKind.PART:
                    assert v.duration >= MIN_PART_DURATION
                elif v.duration >= MIN_SPLIT_DURATION:
                    assert v.kind is VisitKind.SPLITTABLE
                else:
                    assert v.kind is VisitKind.UNSPLITTABLE


def c7_instances():
    """Generated 20-visit scenarios of bases 2 and 3 whose LP relaxation is feasible.

    The other scenarios of these bases are LP-infeasible, so no variant can
    find a solution for them.
    """
    return [
        (2, "general-medical"),
        (2, "balanced-only-medical"),
        (3, "general-moderate"),
        (3, "general-medical"),
        (3, "balanced-medical"),
        (3, "balanced-only-medical"),
    ]


@pytest.mark.slow
@pytest.mark.criterion(7, "TI+HMTZ first solution no later than TI on 20-visit instances")
def test_c7_first_solution(report_lines):
    wall = 600.0
    rows = []
    for seed, label in c7_instances():
        inst = next(i for i in scenario_grid(random_base_instance(20, seed), seed) if i.name.endswith(label))
        row = {"instance": inst.name}
        for variant in ("TI", "TI+HMTZ"):
            res = solve(inst, SolveConfig(variant=variant, wall_limit=wall, stop_at_first=True))
            first = res.stats.get("first_solution_time") if res.plan is not None else None
            row[variant] = (res.status, first)
        rows.append(row)
    report_lines.append(f"  c7: first-solution time (s), wall limit {wall:.0f}s")
    report_lines.append(f"  {'instance':<36} {'TI':>22} {'TI+HMTZ':>22}")
    for row in rows:
        cells = [f"{s} {'-' if t is None else f'{t:.1f}'}" for s, t in (row["TI"], row["TI+HMTZ"])]
        report_lines.append(f"  {row['instance']:<36} {cells[0]:>22} {cells[1]:>22}")
    for row in rows:
        ti, hm = row["TI"][1], row["TI+HMTZ"][1]
        if ti is not None:
            assert hm is not None and hm <= ti, row
    assert any(row["TI+HMTZ"][1] is not None for row in rows)


@pytest.mark.criterion(8, "travel-time model == travel-time oracle; retiming keeps travel")
def test_c8_travel_time():
    checked = 0
    for k, (_, inst) in enumerate(guard_rail_fixtures()):
        o = oracle(k, "travel-time")
        expect = None if o.cost is None else o.cost
        for variant in ("TI", "MTZ"):
            res = _solve(inst, variant, objective="travel-time")
            assert _value(res) == expect, f"fixture {k}, {variant}"
            if res.plan is not None:
                assert plan_travel_time(res.plan, inst) == expect
        if o.plan is not None:
            retimed = improve_timing(o.plan, inst, None, BE, SolveMode(objective="travel-time"), fixed_routes=True)
            assert check_plan(retimed, inst).ok
            assert plan_travel_time(retimed, inst) == plan_travel_time(o.plan, inst)
            assert plan_cost(retimed, inst) <= plan_cost(o.plan, inst)
            checked += 1
    assert checked >= len(guard_rail_fixtures()) // 2


@pytest.mark.criterion(9, "each violation class detected by the verifier")
def test_c9_mutations():
    inst = mutation_base()
    muts = mutations()
    assert set(muts) == set(VIOLATION_KINDS)
    for kind, plan in muts.items():
        assert check_plan(plan, inst).kinds == {kind}, kind


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
