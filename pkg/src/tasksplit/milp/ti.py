"""Time-indexed flow formulation, raw or on a pre-processed graph.

Sums of the form "X over care arcs leaving visit v at times outside a band"
are written with cumulative helper variables ``D_v(t)`` (departures up to
time t) and ``A_v(t)`` (arrivals up to t). They are defined by equalities,
so the model and its LP relaxation are unchanged; rows just stay short.
"""
from __future__ import annotations

import bisect
from collections import defaultdict

import numpy as np

from ..model import Instance, Plan, Route, Stop
from ..preprocess import PreprocessResult
from ..tigraph import CARE, START, WAIT, TimeIndexedGraph
from ..timing import TimingInfeasible, dependency_diffs, earliest_times, orientations
from .mode import SolveMode, add_split_vars, performed_expr
from .mtz import ExtractionError
from .spec import LinExpr, ModelSpec


class _Cumulative:
    """Cumulative indicator variables over the time-sorted nodes of one visit."""

    def __init__(self, m: ModelSpec, family: str, times, node_exprs):
        self.times = list(times)
        self.vars = []
        prev = None
        for e in node_exprs:
            c = m.add_var(family, 0, 1, integer=False)
            row = e.copy()
            row.add_term(c, -1.0)
            if prev is not None:
                row.add_term(prev, 1.0)
            m.eq(row, 0, family)
            self.vars.append(c)
            prev = c

    def upto(self, t) -> LinExpr:
        """Sum of indicators at times <= t."""
        k = bisect.bisect_right(self.times, t) - 1
        return LinExpr.var(self.vars[k]) if k >= 0 else LinExpr()

    def before(self, t) -> LinExpr:
        return self.upto(t - 1)

    def total(self) -> LinExpr:
        return LinExpr.var(self.vars[-1]) if self.vars else LinExpr()

    def after(self, t) -> LinExpr:
        return self.total() - self.upto(t)

    def at(self, k: int) -> LinExpr:
        e = LinExpr.var(self.vars[k])
        if k:
            e.add_term(self.vars[k - 1], -1.0)
        return e

    def outside(self, lo, hi) -> LinExpr:
        return self.before(lo) + self.after(hi)

    def covers_all(self, lo, hi) -> bool:
        return not self.times or (lo <= self.times[0] and hi >= self.times[-1])


def _arc_quals(inst: Instance, g: TimeIndexedGraph) -> list[tuple[int, ...]]:
    avail = set(inst.available_levels)
    tv, hv = g.arc_visits()
    cache = {}
    out = []
    sink = inst.sink
    for a in range(g.n_arcs):
        u, v = int(tv[a]), int(hv[a])
        key = (u, v)
        if key not in cache:
            if u == 0:
                qs = inst.quals_of(v)
            elif v == sink:
                qs = inst.quals_of(u)
            else:
                qs = inst.quals_of(u) & inst.quals_of(v)
            cache[key] = tuple(sorted(qs & avail))
        out.append(cache[key])
    return out


def build_ti_model(inst: Instance, source, mode: SolveMode = SolveMode()) -> ModelSpec:
    if isinstance(source, PreprocessResult):
        g, interval, induced = source.graph, source.interval, source.induced
    else:
        if mode.preprocessed:
            raise ValueError("pre-processed mode needs a PreprocessResult")
        g, interval, induced = source, frozenset(), ()
    m = ModelSpec(name="ti")
    T = inst.horizon
    sink = g.sink
    wages = {q: float(inst.wage(q)) for q in inst.levels}
    travel = g.travel_cost()
    quals = _arc_quals(inst, g)

    var_arc, var_q = [], []
    by_arc: list[list[int]] = []
    for a in range(g.n_arcs):
        ids = []
        for q in quals[a]:
            c = float(travel[a]) if mode.travel_time else wages[q] * float(g.cost[a])
            i = m.add_var("X", 0, 1, c)
            var_arc.append(a)
            var_q.append(q)
            ids.append(i)
        by_arc.append(ids)
    var_arc = np.asarray(var_arc, dtype=np.int64)
    var_q = np.asarray(var_q, dtype=np.int64)
    s = add_split_vars(m, inst, mode)
    y = {v.id: performed_expr(inst, s, v.id) for v in inst.visits}

    # caregiver limit
    for q in inst.available_levels:
        cols = [i for a in np.flatnonzero(g.kind == START) for i, qq in zip(by_arc[a], quals[a]) if qq == q]
        if cols:
            m.add_row_raw(cols, [1.0] * len(cols), hi=float(inst.caregivers.get(q, 0)), family="caregivers")
    # flow conservation per node and qualification
    flow = defaultdict(list)
    for i in range(len(var_arc)):
        a = var_arc[i]
        q = int(var_q[i])
        t, h = int(g.tail[a]), int(g.head[a])
        if t != 0:
            flow[(t, q)].append((i, -1.0))
        if h != sink:
            flow[(h, q)].append((i, 1.0))
    for key in sorted(flow):
        entries = flow[key]
        m.add_row_raw([i for i, _ in entries], [c for _, c in entries], 0.0, 0.0, "flow")

    out_care = defaultdict(list)  # node -> X vars on care arcs leaving it
    in_nonwait = defaultdict(list)  # node -> X vars on start/care arcs entering it
    for a in range(g.n_arcs):
        if g.kind[a] == CARE:
            out_care[int(g.tail[a])].extend(by_arc[a])
        if g.kind[a] != WAIT and g.head[a] != sink:
            in_nonwait[int(g.head[a])].extend(by_arc[a])

    # visit cover
    for v in inst.visits:
        e = LinExpr()
        for node in g.nodes_of(v.id):
            for i in out_care[int(node)]:
                e.add_term(i, 1.0)
        m.eq(e - y[v.id], 0, "visits")

    dep_visits = sorted({x for d in inst.dependencies for x in (d.u, d.v)})
    nodes_sorted, D, A = {}, {}, {}
    for v in dep_visits:
        nodes = g.nodes_of(v)
        nodes = nodes[np.argsort(g.node_time[nodes], kind="stable")]
        nodes_sorted[v] = nodes
        times = [int(g.node_time[n]) for n in nodes]
        D[v] = _Cumulative(m, "D", times, [LinExpr({i: 1.0 for i in out_care[int(n)]}) for n in nodes])
        if v in interval:
            A[v] = _Cumulative(m, "A", times, [LinExpr({i: 1.0 for i in in_nonwait[int(n)]}) for n in nodes])

    def point_rows(u, v, quad, pv: LinExpr):
        dmin_uv, dmax_uv, dmin_vu, dmax_vu = quad
        for k, n in enumerate(nodes_sorted[u]):
            if not out_care[int(n)]:
                continue
            t = int(g.node_time[n])
            if D[v].covers_all(t + dmin_uv, t + dmax_uv):
                continue
            e = pv + D[u].at(k) + D[v].outside(t + dmin_uv, t + dmax_uv)
            m.le(e, 2, "sync-uv")
        for k, n in enumerate(nodes_sorted[v]):
            if not out_care[int(n)]:
                continue
            t = int(g.node_time[n])
            if D[u].covers_all(t + dmin_vu, t + dmax_vu):
                continue
            e = D[v].at(k) + D[u].outside(t + dmin_vu, t + dmax_vu) - pv
            m.le(e, 1, "sync-vu")

    def interval_rows(u, v, quad, pv: LinExpr, pen: LinExpr, family: str):
        dmin_uv, dmax_uv, dmin_vu, dmax_vu = quad
        for (a, b, lo, hi, lhs_p, rhs) in ((u, v, dmin_uv, dmax_uv, pv, 2), (v, u, dmin_vu, dmax_vu, -pv, 1)):
            Da, Aa, Db, Ab = D[a], A[a], D[b], A[b]
            for k, n in enumerate(nodes_sorted[a]):
                t = int(g.node_time[n])
                if in_nonwait[int(n)] and Db.times and t + lo > Db.times[0]:
                    m.le(lhs_p + Aa.at(k) + Db.before(t + lo) - pen, rhs, family)
                if out_care[int(n)] and Ab.times and t + hi < Ab.times[-1]:
                    m.le(lhs_p + Da.at(k) + Ab.after(t + hi) - pen, rhs, family)

    p = {}
    for dep in inst.dependencies:
        u, v = dep.u, dep.v
        pv = p[(u, v)] = m.add_var("p")
        m.le(LinExpr({pv: 2.0}) - y[u] - y[v], 0, "link-p-y")
        if (u in interval) != (v in interval):
            raise ValueError(f"dependency ({u},{v}) mixes interval and point semantics")
        if u in interval:
            interval_rows(u, v, dep.quad, LinExpr.var(pv), LinExpr(), "sync-interval")
        else:
            point_rows(u, v, dep.quad, LinExpr.var(pv))

    def order_expr(first: int, second: int) -> LinExpr:
        """1 when ``first`` starts first in its (stored) dependency pair."""
        d = inst.dependency(first, second)
        pv = p[(d.u, d.v)]
        return LinExpr.var(pv) if d.u == first else LinExpr({pv: -1.0}, 1.0)

    p_ind = {}
    for rec in induced:
        if rec.key not in p_ind:
            pi = p_ind[rec.key] = m.add_var("p-induced")
            m.le(LinExpr({pi: 2.0}) - y[rec.u] - y[rec.w], 0, "link-p-y")
        other = rec.w if rec.first == rec.u else rec.u
        pen = 1 - y[rec.via]
        if rec.case is not None:
            o1 = order_expr(rec.first, rec.via)
            o2 = order_expr(rec.via, other)
            pen = pen + ((1 - o1) if rec.case[0] else o1) + ((1 - o2) if rec.case[1] else o2)
        interval_rows(rec.u, rec.w, rec.quad, LinExpr.var(p_ind[rec.key]), pen, "sync-induced")

    m.meta.update(
        kind="ti",
        source=source,
        mode=mode,
        graph=g,
        var_arc=var_arc,
        var_q=var_q,
        by_arc=by_arc,
        s=s,
        p=p,
        p_induced=p_ind,
        induced=induced,
        interval=interval,
        D={v: c.vars for v, c in D.items()},
        A={v: c.vars for v, c in A.items()},
        nodes_sorted=nodes_sorted,
        travel_time=mode.travel_time,
    )
    return m


# -- extraction ---------------------------------------------------------------


def ti_routes(model: ModelSpec, sol, inst: Instance):
    """Decompose the unit flow into routes of (visit, arrival time, departure time)."""
    g: TimeIndexedGraph = model.meta["graph"]
    sol = np.asarray(sol, dtype=float)
    var_arc, var_q = model.meta["var_arc"], model.meta["var_q"]
    used = np.flatnonzero(sol[: len(var_arc)] > 0.5)
    if len(used) and np.any(np.abs(sol[used] - 1) > 1e-4):
        raise ExtractionError("non-unit flow")
    nxt: dict[tuple[int, int], list[int]] = defaultdict(list)
    starts = []
    for i in used:
        a = int(var_arc[i])
        q = int(var_q[i])
        if g.tail[a] == 0:
            starts.append((q, a))
        else:
            nxt[(int(g.tail[a]), q)].append(a)
    routes = []
    seen_nodes = set()
    for q, a in sorted(starts, key=lambda z: (z[0], int(g.node_time[g.head[z[1]]]), int(g.node_visit[g.head[z[1]]]))):
        stops = []
        node = int(g.head[a])
        arr = int(g.node_time[node])
        while True:
            if node in seen_nodes:
                raise ExtractionError("node used twice")
            seen_nodes.add(node)
            outs = nxt.get((node, q), [])
            if len(outs) != 1:
                raise ExtractionError(f"broken flow at node {node}")
            a = outs[0]
            h = int(g.head[a])
            if g.kind[a] == WAIT:
                node = h
                continue
            stops.append((int(g.node_visit[node]), arr, int(g.node_time[node])))
            if h == g.sink:
                break
            node = h
            arr = int(g.node_time[node])
        routes.append((q, stops))
    return routes


def extract_ti_plan(model: ModelSpec, sol, inst: Instance) -> Plan:
    routes = ti_routes(model, sol, inst)
    interval = model.meta["interval"]
    lo, hi = {}, {}
    for _, stops in routes:
        for v, arr, dep in stops:
            if v in lo:
                raise ExtractionError(f"visit {v} performed twice")
            lo[v], hi[v] = (arr, dep) if v in interval else (dep, dep)
    sol = np.asarray(sol, dtype=float)
    preferred = {k: (k[0] if sol[i] > 0.5 else k[1]) for k, i in model.meta["p"].items()}
    times = None
    for o in orientations(inst, set(lo), preferred):
        diffs = dependency_diffs(inst, set(lo), o)
        if diffs is None:
            continue
        try:
            times = earliest_times(lo, hi, diffs)
            break
        except TimingInfeasible:
            continue
    if times is None:
        raise ExtractionError("no start times satisfy the dependencies")
    plan_routes = tuple(Route(q, tuple(Stop(v, times[v]) for v, _, _ in stops)) for q, stops in routes)
    splits = {w: bool(round(sol[i])) for w, i in model.meta["s"].items()}
    return Plan(routes=plan_routes, splits=splits)


# -- encoding a plan as a solution vector -------------------------------------


def encode_plan(plan: Plan, model: ModelSpec, inst: Instance) -> np.ndarray | None:
    """Solution vector of ``model`` representing ``plan``, or None.

    Each route is laid on the graph by a cheapest-path search through its
    visits in order. Visits with dependencies are pinned: point-semantics
    visits must depart at their start time, interval visits must be
    entered no later and left no earlier than it.
    """
    g: TimeIndexedGraph = model.meta["graph"]
    interval = model.meta["interval"]
    by_arc = model.meta["by_arc"]
    var_q = model.meta["var_q"]
    x = np.zeros(model.n_vars)
    times = plan.start_times()
    dep_visits = {v for d in inst.dependencies for v in (d.u, d.v)}
    out_arcs = defaultdict(list)
    for a in range(g.n_arcs):
        out_arcs[int(g.tail[a])].append(a)
    obj = np.asarray(model.obj)

    def var_of(a, q):
        for i in by_arc[a]:
            if var_q[i] == q:
                return i
        return None

    for route in plan.routes:
        q = route.qual
        seq = route.visits
        # best[node] = (cost, path of arcs) for entering states at the current visit
        frontier = {}
        for a in out_arcs[0]:
            h = int(g.head[a])
            if int(g.node_visit[h]) == seq[0] and var_of(a, q) is not None:
                frontier[h] = (obj[var_of(a, q)], [a])
        for pos, v in enumerate(seq):
            b = times[v]
            nxt_visit = seq[pos + 1] if pos + 1 < len(seq) else None
            # entering constraint for interval visits
            if v in interval:
                frontier = {n: c for n, c in frontier.items() if g.node_time[n] <= b}
            # walk wait arcs
            best = dict(frontier)
            order = sorted(g.nodes_of(v), key=lambda z: g.node_time[z])
            for n in order:
                n = int(n)
                if n not in best:
                    continue
                for a in out_arcs[n]:
                    if g.kind[a] != WAIT:
                        continue
                    i = var_of(a, q)
                    if i is None:
                        continue
                    h = int(g.head[a])
                    cand = (best[n][0] + obj[i], best[n][1] + [a])
                    if h not in best or cand[0] < best[h][0]:
                        best[h] = cand
            new = {}
            for n, (c, path) in best.items():
                t = int(g.node_time[n])
                if v in dep_visits:
                    if v in interval and t < b:
                        continue
                    if v not in interval and t != b:
                        continue
                for a in out_arcs[n]:
                    if g.kind[a] != CARE:
                        continue
                    h = int(g.head[a])
                    target = inst.sink if nxt_visit is None else nxt_visit
                    if int(g.node_visit[h]) != target:
                        continue
                    i = var_of(a, q)
                    if i is None:
                        continue
                    cand = (c + obj[i], path + [a])
                    if h not in new or cand[0] < new[h][0]:
                        new[h] = cand
            frontier = new
            if not frontier:
                return None
        _, path = min(frontier.values(), key=lambda z: z[0])
        for a in path:
            x[var_of(a, q)] = 1.0
    for w, i in model.meta["s"].items():
        x[i] = 1.0 if plan.splits.get(w, False) else 0.0
    performed = set(times)
    for (u, v), i in model.meta["p"].items():
        if u in performed and v in performed:
            d = inst.dependency(u, v)
            diff = times[v] - times[u]
            x[i] = 1.0 if d.dmin_uv <= diff <= d.dmax_uv and d.dmin_uv < inst.horizon else 0.0
    # cumulative helpers follow from X
    out_vars, in_vars = _node_var_maps(g, by_arc)
    for fam, node_vars in (("D", out_vars), ("A", in_vars)):
        for v, cvars in model.meta[fam].items():
            acc = 0.0
            for k, n in enumerate(model.meta["nodes_sorted"][v]):
                acc += float(sum(x[i] for i in node_vars.get(int(n), ())))
                x[cvars[k]] = acc
    A = model.matrix().tocsc()
    _, lb, ub, _, lo, hi = model.arrays()

    Ar = A.tocsr()
    for i in model.meta["p_induced"].values():
        rows = A.indices[A.indptr[i] : A.indptr[i + 1]]
        best_val, best_bad = 0.0, None
        for val in (0.0, 1.0):
            x[i] = val
            ax = Ar[rows] @ x
            bad = int(np.sum((ax < lo[rows] - 1e-6) | (ax > hi[rows] + 1e-6)))
            if best_bad is None or bad < best_bad:
                best_val, best_bad = val, bad
        x[i] = best_val
    ax = Ar @ x
    if np.any((ax < lo - 1e-6) | (ax > hi + 1e-6)) or np.any((x < lb - 1e-9) | (x > ub + 1e-9)):
        return None
    return x


def _node_var_maps(g: TimeIndexedGraph, by_arc):
    out_vars, in_vars = defaultdict(list), defaultdict(list)
    for a in range(g.n_arcs):
        if g.kind[a] == CARE:
            out_vars[int(g.tail[a])].extend(by_arc[a])
        if g.kind[a] != WAIT and g.head[a] != g.sink:
            in_vars[int(g.head[a])].extend(by_arc[a])
    return out_vars, in_vars
