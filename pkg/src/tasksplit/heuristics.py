"""Primal and improvement heuristics run from solver callbacks.

All three share one :class:`HeuristicBudget`. Each returns plans that
pass :func:`tasksplit.verify.check_plan`, or nothing.
"""
from __future__ import annotations

import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from .milp.backend import OPTIMAL, Backend, get_backend
from .milp.mode import SolveMode
from .milp.mtz import ExtractionError, build_mtz_model, encode_mtz_plan, extract_mtz_plan
from .milp.spec import ModelSpec
from .milp.ti import build_ti_model, extract_ti_plan
from .model import SOURCE, Instance, Plan, iter_arcs, plan_cost
from .preprocess import PreprocessResult
from .routing import build_routing_graph
from .tigraph import CARE, START, WAIT, TimeIndexedGraph
from .verify import check_plan

log = logging.getLogger(__name__)

EPS = 1e-6  # "positive" fractional value
PHASE2_CAP = 10.0  # seconds per MTZ improvement call


class HeuristicBudget:
    """Wall-clock allowance shared by all heuristic calls of one solve."""

    def __init__(self, total_seconds: float):
        self.total = max(0.0, float(total_seconds))
        self.consumed = 0.0
        self.calls = 0
        self.successes = 0
        self._lock = threading.Lock()

    def remaining(self) -> float:
        with self._lock:
            return max(0.0, self.total - self.consumed)

    @property
    def exhausted(self) -> bool:
        return self.remaining() <= 0.0

    def charge(self, seconds: float) -> None:
        with self._lock:
            self.consumed = min(self.total, self.consumed + max(0.0, seconds))

    @contextmanager
    def session(self):
        """Time a heuristic call against the budget."""
        with self._lock:
            self.calls += 1
        t0 = time.perf_counter()
        try:
            yield self
        finally:
            self.charge(time.perf_counter() - t0)

    def record_success(self) -> None:
        with self._lock:
            self.successes += 1

    def as_dict(self) -> dict:
        return {"budget": self.total, "consumed": self.consumed, "calls": self.calls, "successes": self.successes}


def _valid(plan: Plan | None, inst: Instance) -> Plan | None:
    if plan is None:
        return None
    rep = check_plan(plan, inst)
    if not rep.ok:
        log.warning("heuristic plan rejected: %s", rep)
        return None
    return plan


def _arc_values(model: ModelSpec, x_frac) -> np.ndarray:
    """Fractional value per graph arc, summed over qualifications."""
    g: TimeIndexedGraph = model.meta["graph"]
    var_arc = model.meta["var_arc"]
    vals = np.zeros(g.n_arcs)
    np.add.at(vals, var_arc, np.asarray(x_frac, dtype=float)[: len(var_arc)])
    return vals


def _pick_node(nodes, out_care, in_care):
    """Earliest node with an outgoing care arc, else with an ingoing one, else earliest."""
    for pool in (nodes[out_care[nodes]], nodes[in_care[nodes]], nodes):
        if len(pool):
            return int(pool[0])
    return None


def heuristic_subgraph(g: TimeIndexedGraph, arc_vals: np.ndarray, inst: Instance) -> np.ndarray:
    """Arc mask of the subgraph built from positive fractional arcs plus augmentation arcs."""
    keep = arc_vals > EPS
    if not keep.any():
        return keep
    nv, nt = g.node_visit, g.node_time
    sink = g.sink
    start_of = {int(g.head[a]): a for a in np.flatnonzero(g.kind == START)}
    end_mask = (g.kind == CARE) & (g.head == sink)
    end_of = {int(g.tail[a]): a for a in np.flatnonzero(end_mask)}
    visit_care = (g.kind == CARE) & (g.head != sink)
    touched = np.zeros(g.n_nodes, dtype=bool)
    touched[g.tail[keep]] = True
    touched[g.head[keep]] = True
    touched[0] = touched[sink] = False
    visited = sorted({int(v) for v in nv[touched]})
    # augmentation adds no visit-to-visit arcs, so these stay fixed
    out_c = np.zeros(g.n_nodes, dtype=bool)
    in_c = np.zeros(g.n_nodes, dtype=bool)
    out_c[g.tail[keep & visit_care]] = True
    in_c[g.head[keep & visit_care]] = True
    for v in visited:
        nodes = g.nodes_of(v)
        nodes = nodes[np.argsort(nt[nodes], kind="stable")]
        incl = nodes[touched[nodes]]
        # wait arcs between the first and last included copy
        lo, hi = nt[incl[0]], nt[incl[-1]]
        w = (g.kind == WAIT) & (nv[g.tail] == v) & (nt[g.tail] >= lo) & (nt[g.head] <= hi)
        keep |= w
        with_out = incl[out_c[incl]]
        if len(with_out) and int(with_out[0]) in start_of:
            keep[start_of[int(with_out[0])]] = True
        with_in = incl[in_c[incl]]
        if len(with_in) and int(with_in[-1]) in end_of:
            keep[end_of[int(with_in[-1])]] = True
        # single-visit route: a node that can carry both a start and an end arc
        both = np.array([n for n in nodes if int(n) in start_of and int(n) in end_of], dtype=np.int64)
        if len(both):
            cand = both[touched[both]] if touched[both].any() else both
            pick = _pick_node(cand, out_c, in_c)
            keep[start_of[pick]] = True
            keep[end_of[pick]] = True
            lo2, hi2 = min(lo, nt[pick]), max(hi, nt[pick])
            keep |= (g.kind == WAIT) & (nv[g.tail] == v) & (nt[g.tail] >= lo2) & (nt[g.head] <= hi2)
        if inst.has_dependencies(v):
            if int(incl[0]) in start_of:
                keep[start_of[int(incl[0])]] = True
            if int(incl[-1]) in end_of:
                keep[end_of[int(incl[-1])]] = True
    return keep


def ti_primal_heuristic(
    x_frac,
    model: ModelSpec,
    inst: Instance,
    budget: HeuristicBudget,
    backend: Backend | None = None,
) -> Plan | None:
    """Solve the time-indexed model on the subgraph spanned by a fractional solution."""
    if budget.exhausted:
        return None
    backend = backend or get_backend()
    with budget.session():
        g = model.meta["graph"]
        mask = heuristic_subgraph(g, _arc_values(model, x_frac), inst)
        if not mask.any():
            return None
        sub = g.subgraph(mask)
        source = model.meta["source"]
        mode: SolveMode = model.meta["mode"]
        src = replace(source, graph=sub) if isinstance(source, PreprocessResult) else sub
        m = build_ti_model(inst, src, mode)
        out = backend.solve(m, max(budget.remaining(), 1e-3))
        if out.x is None:
            return None
        try:
            plan = extract_ti_plan(m, out.x, inst)
        except ExtractionError:
            log.exception("TI heuristic extraction failed")
            return None
    plan = _valid(plan, inst)
    if plan is not None:
        budget.record_success()
    return plan


def projected_arcs(model: ModelSpec, x_frac, inst: Instance) -> set[tuple[int, int]]:
    """Routing arcs (u, v) whose time-indexed copies carry positive flow."""
    g: TimeIndexedGraph = model.meta["graph"]
    vals = _arc_values(model, x_frac)
    arcs = set()
    for a in np.flatnonzero((vals > EPS) & (g.kind != WAIT)):
        u = SOURCE if g.tail[a] == 0 else int(g.node_visit[g.tail[a]])
        v = inst.sink if g.head[a] == g.sink else int(g.node_visit[g.head[a]])
        arcs.add((u, v))
    return arcs


def mtz_primal_heuristic(
    x_frac,
    model: ModelSpec,
    inst: Instance,
    budget: HeuristicBudget,
    backend: Backend | None = None,
) -> Plan | None:
    """Two phases: first feasible MTZ solution on the projected arcs, then improve with all start/end arcs."""
    if budget.exhausted:
        return None
    backend = backend or get_backend()
    mode: SolveMode = model.meta["mode"]
    source = model.meta.get("source")
    windows = source.windows if isinstance(source, PreprocessResult) else None
    with budget.session():
        arcs = projected_arcs(model, x_frac, inst)
        if not arcs:
            return None
        full = build_routing_graph(inst, windows)
        m1 = build_mtz_model(inst, full.restricted(arcs), mode, windows)
        out = backend.solve(m1, max(budget.remaining(), 1e-3), stop_at_first=True)
        if out.x is None:
            return None
        try:
            best = extract_mtz_plan(m1, out.x, inst)
        except ExtractionError:
            log.exception("MTZ heuristic extraction failed")
            return None
        best = _valid(best, inst)
        if best is None:
            return None
        ends = {(SOURCE, v.id) for v in inst.visits} | {(v.id, inst.sink) for v in inst.visits}
        m2 = build_mtz_model(inst, full.restricted(arcs | ends), mode, windows)
        limit = min(budget.remaining(), PHASE2_CAP)
        if limit > 0:
            out2 = backend.solve(m2, limit, initial=encode_mtz_plan(best, m2, inst))
            if out2.x is not None:
                try:
                    cand = _valid(extract_mtz_plan(m2, out2.x, inst), inst)
                except ExtractionError:
                    cand = None
                if cand is not None and _score(cand, inst, mode) < _score(best, inst, mode):
                    best = cand
    budget.record_success()
    return best


def _score(plan: Plan, inst: Instance, mode: SolveMode):
    from .model import plan_objective

    return plan_objective(plan, inst, "travel-time" if mode.travel_time else "cost")


def improve_timing(
    plan: Plan,
    inst: Instance,
    budget: HeuristicBudget | None = None,
    backend: Backend | None = None,
    mode: SolveMode = SolveMode(),
    fixed_routes: bool = False,
) -> Plan:
    """Re-optimize start times (and possibly route cuts) of an incumbent by the MTZ model.

    The model keeps the incumbent's travel arcs plus every start and end
    arc (only the incumbent's own arcs with ``fixed_routes``) and always
    minimizes operational cost. The result is returned only if it is
    strictly cheaper; otherwise the input comes back unchanged.
    """
    if not plan.routes or (budget is not None and budget.exhausted):
        return plan
    backend = backend or get_backend()
    cost_mode = SolveMode(split_policy=mode.split_policy, objective="operational-cost", preprocessed=False)
    ctx = budget.session() if budget is not None else _null()
    with ctx:
        used = {a for r in plan.routes for a in iter_arcs(r, inst)}
        if not fixed_routes:
            used |= {(SOURCE, v.id) for v in inst.visits} | {(v.id, inst.sink) for v in inst.visits}
        full = build_routing_graph(inst)
        missing = used - set(full.arcs)
        if missing:
            return plan
        m = build_mtz_model(inst, full.restricted(used), cost_mode)
        limit = PHASE2_CAP if budget is None else min(budget.remaining(), PHASE2_CAP)
        if limit <= 0:
            return plan
        out = backend.solve(m, limit, initial=encode_mtz_plan(plan, m, inst))
        if out.x is None:
            return plan
        try:
            cand = extract_mtz_plan(m, out.x, inst)
        except ExtractionError:
            return plan
    cand = _valid(cand, inst)
    if cand is None or plan_cost(cand, inst) >= plan_cost(plan, inst):
        return plan
    if mode.travel_time and _score(cand, inst, mode) > _score(plan, inst, mode):
        return plan
    if budget is not None:
        budget.record_success()
    return cand


@contextmanager
def _null():
    yield None
