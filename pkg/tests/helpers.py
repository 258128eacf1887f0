"""Small instance builders shared by the tests."""
from __future__ import annotations

import numpy as np

from tasksplit.io import instance_from_obj
from tasksplit.model import SyncType, sync_params

SYNC_TYPES = list(SyncType)


def travel_from_points(pts, family_of=None):
    """Rounded-up Euclidean travel over visit points, closed under shortest paths.

    Nodes 0 and n+1 get zero rows/columns.
    """
    n = len(pts)
    pts = np.asarray(pts, dtype=float)
    d = np.ceil(np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))).astype(int)
    for k in range(n):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    full = np.zeros((n + 2, n + 2), dtype=int)
    full[1 : n + 1, 1 : n + 1] = d
    return full.tolist()


def make_instance(horizon, visits, caregivers, pts, deps=(), wages=(1, 2, 3)):
    """``visits``: dicts with duration/window/quals and optional kind/parent/part."""
    obj = {
        "horizon": horizon,
        "qualifications": [{"level": i + 1, "wage": w} for i, w in enumerate(wages)],
        "caregivers": {str(q): c for q, c in caregivers.items()},
        "visits": [dict(v, id=i + 1) for i, v in enumerate(visits)],
        "travel": travel_from_points(pts),
        "dependencies": [dict(d) for d in deps],
    }
    return instance_from_obj(obj)


def i1():
    return make_instance(
        120,
        [
            {"duration": 30, "window": [0, 60], "quals": [1, 2, 3]},
            {"duration": 20, "window": [0, 100], "quals": [3]},
        ],
        {3: 1},
        [(0, 0), (10, 0)],
    )


def dep(u, v, quad):
    a, b, c, d = quad
    return {"u": u, "v": v, "dmin_uv": a, "dmax_uv": b, "dmin_vu": c, "dmax_vu": d}


def random_tiny(seed: int, n_orig=None, n_split=None, n_deps=None, sync_type=None, horizon=120, caregivers_total=None):
    """Random guard-rail instance (<= 6 visits, <= 3 caregivers, horizon <= 120)."""
    rng = np.random.default_rng(seed)
    n_orig = int(rng.integers(3, 6)) if n_orig is None else n_orig
    n_split = int(rng.integers(0, 2)) if n_split is None else n_split
    n_split = min(n_split, n_orig)
    cg_total = int(rng.integers(2, 4)) if caregivers_total is None else caregivers_total
    levels = rng.integers(1, 4, size=cg_total)
    caregivers = {}
    for q in levels:
        caregivers[int(q)] = caregivers.get(int(q), 0) + 1
    top = max(caregivers)

    visits, pts = [], []
    for i in range(n_orig):
        d = int(rng.choice([10, 15, 20, 30]))
        a = int(rng.integers(0, horizon - d - 10))
        b = int(min(horizon - d, a + rng.choice([15, 30, 60, 90])))
        lvl = int(rng.integers(1, top + 1))
        visits.append({"duration": d, "window": [a, b], "quals": list(range(lvl, 4))})
        pts.append((int(rng.integers(0, 15)), int(rng.integers(0, 15))))
    splittable = sorted(rng.choice(n_orig, size=n_split, replace=False).tolist()) if n_split else []
    deps = []
    parts = []
    for i in splittable:
        v = visits[i]
        v["kind"] = "splittable"
        v["duration"] = max(v["duration"], 20)
        d = v["duration"]
        a, b = v["window"]
        b = min(b, horizon - d)
        a = min(a, b - 1)
        v["window"] = [a, b]
        delta = int(rng.choice([-5, 0, 5]))
        total = max(10, d + delta)
        d1 = int(rng.integers(5, total - 4))
        for k, dk in ((1, d1), (2, total - d1)):
            pa, pb = a, min(horizon - dk, b + (int(rng.choice([0, 20])) if k == 2 else 0))
            quals = sorted(set(v["quals"]) | ({1} if rng.random() < 0.5 else set()))
            parts.append(({"duration": dk, "window": [pa, max(pb, pa + 1)], "quals": quals, "kind": "part", "parent": i + 1, "part": k}, pts[i]))
    for p, pt in parts:
        visits.append(p)
        pts.append(pt)
    # dependency between the two parts of each split visit
    n_all = len(visits)
    for j in range(0, len(parts), 2):
        u, v = n_orig + j + 1, n_orig + j + 2
        kind = rng.integers(3)
        if kind == 1:
            deps.append(dep(u, v, sync_params(SyncType.U_BEFORE_V_COMPLETED, d_u=visits[u - 1]["duration"], horizon=horizon)))
        elif kind == 2:
            deps.append(dep(u, v, sync_params(SyncType.NO_OVERLAP, d_u=visits[u - 1]["duration"], d_v=visits[v - 1]["duration"], horizon=horizon)))
    n_deps = int(rng.integers(0, 3)) if n_deps is None else n_deps
    used = {(d["u"], d["v"]) for d in deps}
    family = {}
    for i, v in enumerate(visits):
        family[i + 1] = v.get("parent", i + 1)
    for _ in range(n_deps * 4):
        if sum(1 for d in deps) >= n_deps + len(parts) // 2:
            break
        u, v = sorted(rng.choice(np.arange(1, n_all + 1), size=2, replace=False).tolist())
        if (u, v) in used or family[u] == family[v]:
            continue
        st = SYNC_TYPES[int(rng.integers(len(SYNC_TYPES)))] if sync_type is None else SyncType(sync_type)
        lo = int(rng.integers(0, 20))
        hi = lo + int(rng.integers(0, 30))
        quad = sync_params(st, lo, hi, visits[u - 1]["duration"], visits[v - 1]["duration"], horizon)
        deps.append(dep(u, v, quad))
        used.add((u, v))
    return make_instance(horizon, visits, caregivers, pts, deps)


def split_fixture(caregivers=None):
    """A 60-minute level-3 visit next to a short level-3 visit.

    Whole, the two need two level-3 caregivers. Split, the first part may go
    to the level-1 caregiver and one level-3 caregiver does the rest.
    """
    visits = [
        {"duration": 60, "window": [0, 20], "quals": [3], "kind": "splittable"},
        {"duration": 30, "window": [0, 10], "quals": [3]},
        {"duration": 30, "window": [0, 40], "quals": [1, 2, 3], "kind": "part", "parent": 1, "part": 1},
        {"duration": 30, "window": [30, 60], "quals": [3], "kind": "part", "parent": 1, "part": 2},
    ]
    return make_instance(120, visits, caregivers or {1: 1, 3: 1}, [(0, 0), (5, 0), (0, 0), (0, 0)])


def mutation_base():
    """Instance whose optimal plan uses a split, a dependency and two routes."""
    from tasksplit.model import sync_params

    visits = [
        {"duration": 20, "window": [0, 60], "quals": [3]},
        {"duration": 40, "window": [0, 60], "quals": [3], "kind": "splittable"},
        {"duration": 10, "window": [0, 100], "quals": [1, 2, 3]},
        {"duration": 20, "window": [0, 60], "quals": [1, 3], "kind": "part", "parent": 2, "part": 1},
        {"duration": 20, "window": [0, 80], "quals": [3], "kind": "part", "parent": 2, "part": 2},
    ]
    pts = [(0, 0), (10, 0), (20, 0), (10, 0), (10, 0)]
    return make_instance(120, visits, {1: 1, 3: 1}, pts, [dep(1, 3, sync_params("limit-start-diff", 0, 30, horizon=120))])


def _plan(routes, splits):
    from tasksplit.model import Plan, Route, Stop

    return Plan(tuple(Route(q, tuple(Stop(v, t) for v, t in stops)) for q, stops in routes), splits)


# optimum of mutation_base(), cost 190
MUTATION_OPTIMUM = [(1, [(3, 0), (4, 20)]), (3, [(1, 0), (5, 30)])]


def mutations():
    """One mutated copy of the optimal plan per violation class."""
    from tasksplit import verify as V

    base = MUTATION_OPTIMUM
    return {
        V.COVER: _plan([(1, [(4, 20)]), base[1]], {2: True}),
        V.SPLIT: _plan(base, {2: False}),
        V.QUALIFICATION: _plan([(3, base[0][1]), (1, base[1][1])], {2: True}),
        V.WINDOW: _plan([base[0], (3, [(1, 0), (5, 85)])], {2: True}),
        V.TIMING: _plan([base[0], (3, [(1, 0), (5, 25)])], {2: True}),
        V.DEPENDENCY: _plan([(1, [(3, 31), (4, 51)]), base[1]], {2: True}),
        V.CAREGIVERS: _plan([base[0], (3, [(1, 0)]), (3, [(5, 30)])], {2: True}),
        V.CONSECUTIVE: _plan([(1, [(3, 0)]), (3, [(1, 0), (4, 30), (5, 50)])], {2: True}),
    }


def random_incumbent(inst, plan, rng):
    """Same routes as ``plan`` with randomly delayed, still feasible start times.

    Returns None when the sampled lower bounds leave no feasible timing.
    """
    from tasksplit.model import Plan, Route, Stop
    from tasksplit.timing import TimingInfeasible, dependency_diffs, earliest_times

    times = plan.start_times()
    lo = {v: int(rng.integers(inst.visit(v).alpha, inst.visit(v).beta + 1)) for v in times}
    lo = {v: min(lo[v], times[v]) if rng.random() < 0.3 else lo[v] for v in times}
    hi = {v: inst.visit(v).beta for v in times}
    orient = {(d.u, d.v): (d.u if times[d.u] <= times[d.v] else d.v) for d in inst.dependencies if d.u in times and d.v in times}
    diffs = dependency_diffs(inst, set(times), orient) or []
    for r in plan.routes:
        for a, b in zip(r.stops, r.stops[1:]):
            diffs.append((a.visit, b.visit, inst.visit(a.visit).duration + inst.t(a.visit, b.visit), inst.horizon))
    try:
        t = earliest_times(lo, hi, diffs)
    except TimingInfeasible:
        return None
    return Plan(tuple(Route(r.qual, tuple(Stop(s.visit, t[s.visit]) for s in r.stops)) for r in plan.routes), plan.splits)
