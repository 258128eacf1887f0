"""Start-time computations for fixed routes (simple temporal networks)."""
from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .model import DependencySpec, Instance


class TimingInfeasible(Exception):
    pass


def earliest_times(lo: Mapping[int, int], hi: Mapping[int, int], diffs: Sequence[tuple[int, int, int, int]]) -> dict[int, int]:
    """Least solution of ``lo <= t <= hi`` and ``a <= t_y - t_x <= b``.

    ``diffs`` holds ``(x, y, a, b)`` tuples. Raises :class:`TimingInfeasible`.
    """
    t = dict(lo)
    for x in t:
        if t[x] > hi[x]:
            raise TimingInfeasible(f"empty domain for {x}")
    for _ in range(len(t) * max(1, len(diffs)) + 2):
        changed = False
        for x, y, a, b in diffs:
            if t[y] < t[x] + a:
                t[y] = t[x] + a
                changed = True
            if t[x] < t[y] - b:
                t[x] = t[y] - b
                changed = True
        for x in t:
            if t[x] > hi[x]:
                raise TimingInfeasible(f"upper bound exceeded for {x}")
        if not changed:
            return t
    raise TimingInfeasible("no fixpoint")


def band_for(dep: DependencySpec, first: int, horizon: int) -> tuple[int, int] | None:
    return dep.band(first, horizon)


def dependency_diffs(inst: Instance, performed, orientation: Mapping[tuple[int, int], int]):
    """Difference constraints for dependencies among performed visits.

    ``orientation`` maps ``(u, v)`` to the visit that starts first. Returns
    None when a chosen order is impossible.
    """
    out = []
    for dep in inst.dependencies:
        if dep.u not in performed or dep.v not in performed:
            continue
        first = orientation[(dep.u, dep.v)]
        band = dep.band(first, inst.horizon)
        if band is None:
            return None
        other = dep.v if first == dep.u else dep.u
        out.append((first, other, band[0], band[1]))
    return out


def orientations(inst: Instance, performed, preferred: Mapping[tuple[int, int], int] | None = None, limit: int = 12):
    """Yield orientation maps for the active dependencies, preferred one first."""
    active = [d for d in inst.dependencies if d.u in performed and d.v in performed]
    preferred = dict(preferred or {})
    base = {(d.u, d.v): preferred.get((d.u, d.v), d.u) for d in active}
    yield base
    if len(active) > limit:
        return
    keys = list(base)
    for flips in itertools.product((False, True), repeat=len(keys)):
        if not any(flips):
            continue
        o = dict(base)
        for key, fl in zip(keys, flips):
            if fl:
                o[key] = key[1] if o[key] == key[0] else key[0]
        yield o


def optimal_timing(
    inst: Instance,
    routes: Sequence[tuple[int, Sequence[int]]],
    orientation: Mapping[tuple[int, int], int],
    windows: Mapping[int, tuple[int, int]] | None = None,
) -> dict[int, int] | None:
    """Cheapest integer start times for fixed routes and a fixed dependency orientation.

    Minimizes the wage-weighted working time by a linear program over
    difference constraints; the constraint matrix is totally unimodular so
    the vertex optimum is integral. Returns None when infeasible.
    """
    visits = [v for _, seq in routes for v in seq]
    if not visits:
        return {}
    idx = {v: i for i, v in enumerate(visits)}
    nr = len(routes)
    nv = len(visits)
    n = nv + 2 * nr  # b_v, then (start_r, end_r)
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.full(n, float(inst.horizon))
    for v in visits:
        a, b = windows[v] if windows else inst.visit(v).window
        lb[idx[v]], ub[idx[v]] = a, b
    rows, rhs = [], []

    def diff(x, y, bound):  # t_x - t_y <= bound
        r = np.zeros(n)
        r[x] += 1
        r[y] -= 1
        rows.append(r)
        rhs.append(bound)

    for r, (q, seq) in enumerate(routes):
        s_i, e_i = nv + 2 * r, nv + 2 * r + 1
        w = float(inst.wage(q))
        c[e_i] += w
        c[s_i] -= w
        diff(s_i, idx[seq[0]], 0)  # start <= first b
        last = seq[-1]
        diff(idx[last], e_i, -inst.visit(last).duration)  # b_last + d <= end
        for u, v in zip(seq, seq[1:]):
            diff(idx[u], idx[v], -(inst.visit(u).duration + inst.t(u, v)))
    diffs = dependency_diffs(inst, set(visits), orientation)
    if diffs is None:
        return None
    for x, y, a, b in diffs:
        diff(idx[x], idx[y], -a)  # t_y - t_x >= a
        diff(idx[y], idx[x], b)
    res = linprog(
        c,
        A_ub=np.asarray(rows) if rows else None,
        b_ub=np.asarray(rhs) if rows else None,
        bounds=list(zip(lb, ub)),
        method="highs-ds",
    )
    if res.status != 0:
        return None
    vals = np.round(res.x).astype(int)
    return {v: int(vals[idx[v]]) for v in visits}


def best_timing(inst: Instance, routes, preferred=None, windows=None, exhaustive: bool = False) -> dict[int, int] | None:
    """Cheapest timing for fixed routes.

    The preferred orientation is tried first; other orientations are only
    tried if it fails, or always when ``exhaustive``.
    """
    performed = {v for _, seq in routes for v in seq}
    best, best_cost = None, None
    for o in orientations(inst, performed, preferred):
        t = optimal_timing(inst, routes, o, windows)
        if t is None:
            continue
        cost = sum(
            inst.wage(q) * (t[seq[-1]] + inst.visit(seq[-1]).duration - t[seq[0]]) for q, seq in routes if seq
        )
        if best_cost is None or cost < best_cost:
            best, best_cost = t, cost
        if not exhaustive:
            break
    return best
