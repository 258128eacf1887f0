"""Compact formulation with sequencing (MTZ-type) start-time constraints."""
from __future__ import annotations

from collections import defaultdict
from typing import Mapping

import numpy as np

from ..model import SOURCE, Instance, Plan, Route, Stop
from ..routing import RoutingGraph, build_routing_graph
from .mode import SolveMode, add_split_vars, performed_expr
from ..timing import best_timing
from .spec import LinExpr, ModelSpec


class ExtractionError(RuntimeError):
    pass


def build_mtz_model(
    inst: Instance,
    graph: RoutingGraph | None = None,
    mode: SolveMode = SolveMode(),
    windows: Mapping[int, tuple[int, int]] | None = None,
) -> ModelSpec:
    win = {v.id: tuple(windows[v.id]) if windows else v.window for v in inst.visits}
    if graph is None:
        graph = build_routing_graph(inst, win)
    T = inst.horizon
    sink = inst.sink
    avail = set(inst.available_levels)
    m = ModelSpec(name="mtz")
    tt = mode.travel_time

    x: dict[tuple[int, int], dict[int, int]] = {}
    for (u, v) in graph.arcs:
        if u == SOURCE:
            quals = inst.quals_of(v)
        elif v == sink:
            quals = inst.quals_of(u)
        else:
            quals = inst.quals_of(u) & inst.quals_of(v)
        cost = inst.t(u, v) if tt and u != SOURCE and v != sink else 0.0
        x[(u, v)] = {q: m.add_var("x", 0, 1, cost) for q in sorted(quals & avail)}
    s = add_split_vars(m, inst, mode)
    y = {v.id: m.add_var("y") for v in inst.visits}
    b = {v.id: m.add_var("b", 0, max(win[v.id][1], 0), integer=False) for v in inst.visits}
    k, f = {}, {}
    if not tt:
        for v in inst.visits:
            for q in sorted(v.quals & avail):
                k[(v.id, q)] = m.add_var("k", 0, T, -float(inst.wage(q)), integer=False)
                f[(v.id, q)] = m.add_var("f", 0, T, float(inst.wage(q)), integer=False)

    out_arcs = defaultdict(list)
    in_arcs = defaultdict(list)
    for a in x:
        out_arcs[a[0]].append(a)
        in_arcs[a[1]].append(a)

    for q in sorted(avail):
        e = LinExpr({x[a][q]: 1.0 for a in out_arcs[SOURCE] if q in x[a]})
        m.le(e, inst.caregivers.get(q, 0), "caregivers")
    for v in inst.visits:
        for q in sorted(v.quals & avail):
            e = LinExpr()
            for a in out_arcs[v.id]:
                if q in x[a]:
                    e.add_term(x[a][q], 1.0)
            for a in in_arcs[v.id]:
                if q in x[a]:
                    e.add_term(x[a][q], -1.0)
            m.eq(e, 0, "flow")
        e = LinExpr({x[a][q]: 1.0 for a in out_arcs[v.id] for q in x[a]})
        e.add_term(y[v.id], -1.0)
        m.eq(e, 0, "inflow")
        m.eq(LinExpr.var(y[v.id]) - performed_expr(inst, s, v.id), 0, "link-y-s")
        a_v, b_v = win[v.id]
        m.ge(LinExpr({b[v.id]: 1.0, y[v.id]: -float(a_v)}), 0, "window")
        m.le(LinExpr({b[v.id]: 1.0, y[v.id]: -float(b_v)}), 0, "window")

    for (u, v), xs in x.items():
        if u == SOURCE or v == sink or not xs:
            continue
        bu, du = win[u][1], inst.visit(u).duration
        e = LinExpr({b[u]: 1.0, b[v]: -1.0})
        for i in xs.values():
            e.add_term(i, float(inst.t(u, v) + bu + du))
        m.le(e, bu, "time")

    if not tt:
        for v in inst.visits:
            bv, dv = win[v.id][1], v.duration
            for q in sorted(v.quals & avail):
                xs_ = x.get((SOURCE, v.id), {}).get(q)
                xe = x.get((v.id, sink), {}).get(q)
                kk, ff = k[(v.id, q)], f[(v.id, q)]
                if xs_ is None:
                    m.le(LinExpr.var(kk), 0, "start-times")
                else:
                    m.ge(LinExpr({kk: 1.0, b[v.id]: -1.0, xs_: -float(bv)}), -bv, "start-times")
                    m.le(LinExpr({kk: 1.0, xs_: -float(T - dv)}), 0, "start-times")
                m.le(LinExpr({kk: 1.0, b[v.id]: -1.0}), 0, "start-times")
                if xe is None:
                    m.le(LinExpr.var(ff), 0, "finish-times")
                else:
                    m.ge(LinExpr({ff: 1.0, b[v.id]: -1.0, xe: -float(bv + dv)}), -bv, "finish-times")
                    m.le(LinExpr({ff: 1.0, xe: -float(T)}), 0, "finish-times")
                m.le(LinExpr({ff: 1.0, b[v.id]: -1.0}), dv, "finish-times")

    p = {}
    for dep in inst.dependencies:
        u, v = dep.u, dep.v
        pv = p[(u, v)] = m.add_var("p")
        yu, yv = LinExpr.var(y[u]), LinExpr.var(y[v])
        au, bu = win[u]
        av, bv = win[v]
        m.le(LinExpr({pv: 2.0}) - yu - yv, 0, "link-p-y")
        # b_v - b_u <= dmax_uv p + beta_v (2 - y_u - y_v)
        e = LinExpr({b[v]: 1.0, b[u]: -1.0, pv: -float(dep.dmax_uv)}) + bv * (yu + yv)
        m.le(e, 2 * bv, "sync-max-uv")
        # b_u - b_v <= dmax_vu (y_v - p) + beta_u (2 - y_u - y_v)
        e = LinExpr({b[u]: 1.0, b[v]: -1.0, pv: float(dep.dmax_vu)}) - dep.dmax_vu * yv + bu * (yu + yv)
        m.le(e, 2 * bu, "sync-max-vu")
        # b_v - b_u >= dmin_uv p - beta_u (2 - y_u - y_v) - max(0, beta_u - alpha_v)(y_u - p)
        m1 = max(0, bu - av)
        e = LinExpr({b[v]: 1.0, b[u]: -1.0, pv: -float(dep.dmin_uv) - m1}) - bu * (yu + yv) + m1 * yu
        m.ge(e, -2 * bu, "sync-min-uv")
        # b_u - b_v >= dmin_vu (y_v - p) - (beta_v + dmin_vu)(2 - y_u - y_v) - max(0, beta_v - alpha_u) p
        m2 = max(0, bv - au)
        big = bv + dep.dmin_vu
        e = LinExpr({b[u]: 1.0, b[v]: -1.0, pv: float(dep.dmin_vu) + m2}) - dep.dmin_vu * yv - big * (yu + yv)
        m.ge(e, -2 * big, "sync-min-vu")

    m.meta.update(kind="mtz", mode=mode, x=x, s=s, y=y, b=b, p=p, k=k, f=f, windows=win, travel_time=tt, graph=graph)
    return m


def mtz_routes(model: ModelSpec, sol, inst: Instance) -> list[tuple[int, list[int]]]:
    """Follow unit x-flows from the start node."""
    sol = np.asarray(sol, dtype=float)
    x = model.meta["x"]
    sink = inst.sink
    succ: dict[tuple[int, int], list[int]] = defaultdict(list)  # (node, q) -> successors
    starts: dict[int, list[int]] = defaultdict(list)
    for (u, v), xs in x.items():
        for q, i in xs.items():
            val = sol[i]
            if val > 0.5:
                if abs(val - 1) > 1e-4:
                    raise ExtractionError(f"non-unit flow on arc ({u},{v})")
                if u == SOURCE:
                    starts[q].append(v)
                else:
                    succ[(u, q)].append(v)
    routes = []
    seen = set()
    for q in sorted(starts):
        for first in sorted(starts[q]):
            cur, seq = first, []
            while cur != sink:
                if cur in seen:
                    raise ExtractionError(f"visit {cur} reached twice")
                seen.add(cur)
                seq.append(cur)
                nxt = succ.get((cur, q), [])
                if len(nxt) != 1:
                    raise ExtractionError(f"broken route after visit {cur}")
                cur = nxt[0]
            routes.append((q, seq))
    return routes


def extract_mtz_plan(model: ModelSpec, sol, inst: Instance) -> Plan:
    """Routes from the x-flows; start times re-optimized for those routes.

    The continuous b values of an optimal solution need not be integral or
    cost-minimal for the chosen routes (in travel-time mode they are
    arbitrary), so starts come from the exact timing LP with the dependency
    orders given by p. Rounded b values are the last resort.
    """
    sol = np.asarray(sol, dtype=float)
    routes = mtz_routes(model, sol, inst)
    preferred = {k: (k[0] if sol[i] > 0.5 else k[1]) for k, i in model.meta["p"].items()}
    times = best_timing(inst, routes, preferred, model.meta["windows"])
    if times is None:
        b = model.meta["b"]
        times = {v: int(round(sol[b[v]])) for _, seq in routes for v in seq}
    plan_routes = tuple(Route(q, tuple(Stop(v, times[v]) for v in seq)) for q, seq in routes)
    splits = {w: bool(round(sol[i])) for w, i in model.meta["s"].items()}
    return Plan(routes=plan_routes, splits=splits)


def encode_mtz_plan(plan: Plan, model: ModelSpec, inst: Instance) -> np.ndarray | None:
    """Solution vector of an MTZ model representing ``plan``; None if it does not fit."""
    x = np.zeros(model.n_vars)
    xs = model.meta["x"]
    sink = inst.sink
    times = plan.start_times()
    for r in plan.routes:
        vs = r.visits
        for a in [(SOURCE, vs[0]), *zip(vs, vs[1:]), (vs[-1], sink)]:
            i = xs.get(a, {}).get(r.qual)
            if i is None:
                return None
            x[i] = 1.0
        if not model.meta["travel_time"]:
            ki = model.meta["k"].get((vs[0], r.qual))
            fi = model.meta["f"].get((vs[-1], r.qual))
            if ki is None or fi is None:
                return None
            x[ki] = times[vs[0]]
            x[fi] = times[vs[-1]] + inst.visit(vs[-1]).duration
    for w, i in model.meta["s"].items():
        x[i] = 1.0 if plan.splits.get(w, False) else 0.0
    for v, i in model.meta["y"].items():
        x[i] = 1.0 if v in times else 0.0
    for v, i in model.meta["b"].items():
        x[i] = times.get(v, 0)
    for (u, v), i in model.meta["p"].items():
        if u in times and v in times:
            d = inst.dependency(u, v)
            x[i] = 1.0 if d.band(u, inst.horizon) is not None and d.dmin_uv <= times[v] - times[u] <= d.dmax_uv else 0.0
    if model.violation(x):
        return None
    return x
