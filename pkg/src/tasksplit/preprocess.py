"""Reductions of the time-indexed graph and the matching sync-constraint rewrite.

Passes run in a fixed order: window tightening, redundant travel arc
removal, removal of suboptimal route start/end arcs, and merging of pure
waiting chains.

Visits in *interval semantics* may start anywhere between the arrival node
of the caregiver and the departure node. Their dependencies are written
with arrival/departure indicators, and every middle visit of two
dependencies gets induced constraints between its two partners.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import DependencySpec, Instance
from .tigraph import CARE, START, WAIT, TimeIndexedGraph, build_ti_graph

Window = tuple[int, int]


# -- time windows ---------------------------------------------------------


def _implies(inst: Instance, a: int, b: int) -> bool:
    """True if performing visit ``a`` forces visit ``b`` to be performed."""
    cb = inst.performed_condition(b)
    return cb[0] == "always" or cb == inst.performed_condition(a)


def dependency_order(dep: DependencySpec, horizon: int) -> str:
    """``"uv"`` or ``"vu"`` for a predetermined order, ``"none"``, or ``"never"``."""
    uv_dead = dep.dmin_uv >= horizon
    vu_dead = dep.dmin_vu >= horizon
    if uv_dead and vu_dead:
        return "never"
    if vu_dead:
        return "uv"
    if uv_dead:
        return "vu"
    return "none"


def _pair_bounds(first_w: Window, second_w: Window, lo: int, hi: int) -> tuple[Window, Window]:
    (a1, b1), (a2, b2) = first_w, second_w
    return (max(a1, a2 - hi), min(b1, b2 - lo)), (max(a2, a1 + lo), min(b2, b1 + hi))


def tighten_time_windows(
    inst: Instance, windows: Mapping[int, Window] | None = None, max_rounds: int = 1000
) -> tuple[dict[int, Window], list[tuple[int, int]]]:
    """Propagate dependency bands into the time windows until nothing changes.

    A window is only narrowed using a partner whose execution is implied by
    its own. Returns the new windows and the pairs that emptied a window.
    """
    T = inst.horizon
    win = {v.id: tuple(windows[v.id]) if windows else v.window for v in inst.visits}
    infeasible: set[tuple[int, int]] = set()
    for _ in range(max_rounds):
        changed = False
        for dep in inst.dependencies:
            u, v = dep.u, dep.v
            order = dependency_order(dep, T)
            if order == "never":
                cand_u = cand_v = (1, 0)
            elif order == "uv":
                cand_u, cand_v = _pair_bounds(win[u], win[v], dep.dmin_uv, dep.dmax_uv)
            elif order == "vu":
                cand_v, cand_u = _pair_bounds(win[v], win[u], dep.dmin_vu, dep.dmax_vu)
            else:
                (au, bu), (av, bv) = win[u], win[v]
                cand_u = (max(au, av - dep.dmax_uv), min(bu, bv + dep.dmax_vu))
                cand_v = (max(av, au - dep.dmax_vu), min(bv, bu + dep.dmax_uv))
            for x, y, cand in ((u, v, cand_u), (v, u, cand_v)):
                if win[x][0] > win[x][1] or not _implies(inst, x, y):
                    continue
                new = (max(win[x][0], cand[0]), min(win[x][1], cand[1]))
                if new != win[x]:
                    win[x] = new
                    changed = True
                    if new[0] > new[1]:
                        infeasible.add((u, v))
        if not changed:
            break
    return win, sorted(infeasible)


# -- interval semantics scope --------------------------------------------


def dependency_components(inst: Instance) -> list[list[int]]:
    adj = inst.dependency_partners
    seen, comps = set(), []
    for v in sorted(adj):
        if v in seen or not adj[v]:
            continue
        stack, comp = [v], []
        seen.add(v)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(sorted(comp))
    return comps


def _is_star(inst: Instance, comp: list[int]) -> bool:
    edges = sum(len(inst.dependency_partners[x]) for x in comp) // 2
    if edges != len(comp) - 1:
        return False
    # a tree has diameter <= 2 iff some vertex touches every edge
    return any(len(inst.dependency_partners[x]) == edges for x in comp)


def interval_visits(inst: Instance, scope: str = "star") -> frozenset[int]:
    """Visits whose dependencies are written in interval semantics.

    ``"star"`` flags dependency components that are stars (or single
    pairs), where pairwise plus induced two-step constraints are exact.
    ``"all"`` flags every visit with a dependency.
    """
    if scope not in ("star", "all", "none"):
        raise ValueError(f"unknown interval scope {scope!r}")
    if scope == "none":
        return frozenset()
    out = set()
    for comp in dependency_components(inst):
        if scope == "all" or _is_star(inst, comp):
            out.update(comp)
    return frozenset(out)


# -- induced dependencies -------------------------------------------------


def _oriented(dep: DependencySpec, first: int) -> tuple[int, int, int, int]:
    """Quadruple seen from ``first``: (min,max) when ``first`` starts first, then reverse."""
    if dep.u == first:
        return dep.quad
    return (dep.dmin_vu, dep.dmax_vu, dep.dmin_uv, dep.dmax_uv)


def _band(lo: int, hi: int, T: int) -> tuple[int, int]:
    if hi < 0 or lo >= T:
        return (T, T)
    return (min(max(lo, 0), T), min(hi, T))


def induced_dependency_table(dep_uv, dep_vw, T: int) -> dict[tuple[int, int], tuple[tuple[int, int], tuple[int, int]]]:
    """Bands between ``u`` and ``w`` induced through a shared middle visit ``v``.

    ``dep_uv`` and ``dep_vw`` are quadruples oriented u->v and v->w. Keys are
    ``(p_uv, p_vw)``, where 1 means the first-named visit starts first.
    Values are ``(forward, reverse)``: the band of ``t_w - t_u`` when ``u``
    starts first, and of ``t_u - t_w`` otherwise. ``(T, T)`` marks an
    impossible order.
    """
    uv_min, uv_max, vu_min, vu_max = dep_uv
    vw_min, vw_max, wv_min, wv_max = dep_vw
    dead = (T, T)
    table = {
        (1, 1): (_band(uv_min + vw_min, uv_max + vw_max, T), dead),
        (1, 0): (_band(uv_min - wv_max, uv_max - wv_min, T), _band(wv_min - uv_max, wv_max - uv_min, T)),
        (0, 1): (_band(vw_min - vu_max, vw_max - vu_min, T), _band(vu_min - vw_max, vu_max - vw_min, T)),
        (0, 0): (dead, _band(wv_min + vu_min, wv_max + vu_max, T)),
    }
    # a case built on an impossible order is itself impossible
    alive_uv = {1: uv_min < T, 0: vu_min < T}
    alive_vw = {1: vw_min < T, 0: wv_min < T}
    for (a, b) in table:
        if not (alive_uv[a] and alive_vw[b]):
            table[(a, b)] = (dead, dead)
    return table


@dataclass(frozen=True)
class InducedDependency:
    """Constraint between ``u`` and ``w`` (u < w) derived through ``via``.

    ``case`` is ``(o_uv, o_vw)`` in the orientation u->via->w, or None for
    the strict-sync shortcut. The record is relaxed unless the case is the
    active one and ``via`` is performed.
    """

    u: int
    w: int
    via: int
    case: tuple[int, int] | None
    quad: tuple[int, int, int, int]
    first: int  # the partner named first in the u->via->w orientation

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.u, self.w, self.via)


def induced_dependencies(inst: Instance, flagged) -> list[InducedDependency]:
    T = inst.horizon
    out = []
    for v in sorted(flagged):
        partners = sorted(inst.dependency_partners.get(v, []))
        if len(partners) < 2:
            continue
        for a, c in itertools.combinations(partners, 2):
            d_av = _oriented(inst.dependency(a, v), a)
            d_vc = _oriented(inst.dependency(v, c), v)
            lo, hi = min(a, c), max(a, c)

            def stored(forward, reverse):
                # forward is t_c - t_a with a first; store relative to lo
                return (*forward, *reverse) if a == lo else (*reverse, *forward)

            if d_av == (0, 0, 0, 0) or d_vc == (0, 0, 0, 0):
                # strict sync: the other dependency carries over unchanged
                if d_av == (0, 0, 0, 0):
                    fw, rv = (d_vc[0], d_vc[1]), (d_vc[2], d_vc[3])
                else:
                    fw, rv = (d_av[0], d_av[1]), (d_av[2], d_av[3])
                out.append(InducedDependency(lo, hi, v, None, stored(fw, rv), a))
                continue
            for case, (fw, rv) in induced_dependency_table(d_av, d_vc, T).items():
                out.append(InducedDependency(lo, hi, v, case, stored(fw, rv), a))
    return out


# -- graph passes ----------------------------------------------------------


def _outgoing_visit_care(g: TimeIndexedGraph) -> np.ndarray:
    has = np.zeros(g.n_nodes, dtype=bool)
    m = (g.kind == CARE) & (g.head != g.sink)
    has[g.tail[m]] = True
    return has


def _incoming_visit_care(g: TimeIndexedGraph) -> np.ndarray:
    has = np.zeros(g.n_nodes, dtype=bool)
    m = (g.kind == CARE) & (g.head != g.sink)
    has[g.head[m]] = True
    return has


def remove_redundant_travel_arcs(g: TimeIndexedGraph, movable) -> TimeIndexedGraph:
    """Of all care arcs u -> v arriving at v's first node keep the latest departure.

    Only tails in ``movable`` (dependency-free or interval-semantics visits)
    are reduced.
    """
    movable = set(movable)
    tv, hv = g.arc_visits()
    first_time = {}
    for v in set(int(x) for x in g.node_visit[1:-1]):
        first_time[v] = int(g.node_time[g.nodes_of(v)].min())
    keep = np.ones(g.n_arcs, dtype=bool)
    cand = np.flatnonzero((g.kind == CARE) & (g.head != g.sink))
    best: dict[tuple[int, int], int] = {}
    for a in cand:
        u, v = int(tv[a]), int(hv[a])
        if u not in movable or int(g.node_time[g.head[a]]) != first_time[v]:
            continue
        key = (u, v)
        b = best.get(key)
        if b is None or g.node_time[g.tail[a]] > g.node_time[g.tail[b]]:
            if b is not None:
                keep[b] = False
            best[key] = a
        else:
            keep[a] = False
    if keep.all():
        return g
    return g.subgraph(keep)


def remove_suboptimal_route_arcs(g: TimeIndexedGraph, sync_free) -> TimeIndexedGraph:
    """Drop start arcs that force waiting and end arcs that follow waiting.

    Applies to dependency-free visits. Each such visit keeps at least one
    node carrying both a start and an end arc (a single-visit route).
    """
    sync_free = set(sync_free)
    out_care = _outgoing_visit_care(g)
    in_care = _incoming_visit_care(g)
    nv = g.node_visit
    keep = np.ones(g.n_arcs, dtype=bool)
    starts = g.kind == START
    ends = (g.kind == CARE) & (g.head == g.sink)
    free_node = np.isin(nv, list(sync_free)) if sync_free else np.zeros(g.n_nodes, dtype=bool)
    keep &= ~(starts & free_node[g.head] & ~out_care[g.head])
    keep &= ~(ends & free_node[g.tail] & ~in_care[g.tail])
    has_start = np.zeros(g.n_nodes, dtype=bool)
    has_start[g.head[starts & keep]] = True
    has_end = np.zeros(g.n_nodes, dtype=bool)
    has_end[g.tail[ends & keep]] = True
    restore = []
    for v in sorted(sync_free):
        nodes = g.nodes_of(v)
        if len(nodes) == 0 or (has_start[nodes] & has_end[nodes]).any():
            continue
        nodes = nodes[np.argsort(g.node_time[nodes], kind="stable")]
        pick = next(x for pool in (nodes[out_care[nodes]], nodes[in_care[nodes]], nodes) for x in pool[:1])
        if not has_start[pick]:
            restore.append((0, pick))
        if not has_end[pick]:
            restore.append((pick, g.sink))
    if keep.all():
        return g
    # restored arcs were removed above; re-enable them
    for t, h in restore:
        keep[(g.tail == t) & (g.head == h)] = True
    return g.subgraph(keep)


def merge_waiting_chains(g: TimeIndexedGraph) -> TimeIndexedGraph:
    """Replace maximal runs of nodes touched only by one wait arc in and out."""
    n = g.n_nodes
    indeg = np.bincount(g.head, minlength=n)
    outdeg = np.bincount(g.tail, minlength=n)
    wait = g.kind == WAIT
    in_wait = np.bincount(g.head[wait], minlength=n)
    out_wait = np.bincount(g.tail[wait], minlength=n)
    pure = (indeg == 1) & (outdeg == 1) & (in_wait == 1) & (out_wait == 1)
    pure[0] = pure[g.sink] = False
    if not pure.any():
        return g
    succ = np.full(n, -1)
    succ[g.tail[wait]] = g.head[wait]
    keep = ~(pure[g.tail] | pure[g.head])
    new_t, new_h, new_c = [], [], []
    for a in np.flatnonzero(wait & ~pure[g.tail] & pure[g.head]):
        x = int(g.head[a])
        while pure[x]:
            x = int(succ[x])
        t = int(g.tail[a])
        new_t.append(t)
        new_h.append(x)
        new_c.append(int(g.node_time[x] - g.node_time[t]))
    return g.with_arcs(
        np.concatenate([g.tail[keep], new_t]).astype(np.int64),
        np.concatenate([g.head[keep], new_h]).astype(np.int64),
        np.concatenate([g.kind[keep], np.full(len(new_t), WAIT)]).astype(np.int8),
        np.concatenate([g.cost[keep], new_c]).astype(np.int64),
    )


# -- driver -----------------------------------------------------------------


@dataclass(frozen=True)
class PassStats:
    name: str
    nodes_before: int
    nodes_after: int
    arcs_before: int
    arcs_after: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class PreprocessResult:
    instance: Instance
    windows: dict[int, Window]
    graph: TimeIndexedGraph
    interval: frozenset[int]
    induced: tuple[InducedDependency, ...]
    infeasible_pairs: tuple[tuple[int, int], ...]
    stats: tuple[PassStats, ...] = field(default_factory=tuple)

    def stats_dicts(self) -> list[dict]:
        return [s.as_dict() for s in self.stats]


def preprocess(
    inst: Instance,
    windows: Mapping[int, Window] | None = None,
    interval_scope: str = "star",
    passes=("tighten", "redundant", "route-ends", "merge-waits"),
) -> PreprocessResult:
    stats = []
    infeasible: list = []
    win = {v.id: tuple(windows[v.id]) if windows else v.window for v in inst.visits}
    if "tighten" in passes:
        before = build_ti_graph(inst, win)
        win, infeasible = tighten_time_windows(inst, win)
        g = build_ti_graph(inst, win)
        stats.append(PassStats("tighten", before.n_nodes, g.n_nodes, before.n_arcs, g.n_arcs))
    else:
        g = build_ti_graph(inst, win)
    flagged = interval_visits(inst, interval_scope) if "redundant" in passes else frozenset()
    sync_free = [v.id for v in inst.visits if not inst.has_dependencies(v.id)]
    steps = (
        ("redundant", lambda x: remove_redundant_travel_arcs(x, set(sync_free) | flagged)),
        ("route-ends", lambda x: remove_suboptimal_route_arcs(x, sync_free)),
        ("merge-waits", merge_waiting_chains),
    )
    for name, fn in steps:
        if name not in passes:
            continue
        new = fn(g)
        stats.append(PassStats(name, g.n_nodes, new.n_nodes, g.n_arcs, new.n_arcs))
        g = new
    return PreprocessResult(
        instance=inst,
        windows=win,
        graph=g,
        interval=flagged,
        induced=tuple(induced_dependencies(inst, flagged)),
        infeasible_pairs=tuple(infeasible),
        stats=tuple(stats),
    )
