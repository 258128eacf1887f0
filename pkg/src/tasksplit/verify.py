"""Plan checking, an exhaustive optimum oracle for tiny instances, and metrics.

Nothing here imports the MILP code: the checker and the oracle are the
independent ground truth the formulations are tested against.

Oracle search
-------------
For each split vector the oracle enumerates route sets (visit-to-caregiver
assignment and order), pruned by qualifications, windows and a
no-waiting cost bound. For a fixed route set and a fixed start order of
every active dependency pair, the start-time constraints form a simple
temporal network (STN). Its minimal network (all-pairs shortest paths)
is decomposable: every value left in a variable's domain extends to a full
solution. Route cost depends only on each route's first and last start, so
the oracle enumerates those integer values exhaustively (branch and bound
over the minimal-network domains) and lets decomposability supply the
other starts. ``full_grid=True`` instead enumerates every start time of
every visit; tests check both agree.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .model import Instance, Plan, Route, Stop, VisitKind, plan_cost, plan_travel_time, route_working_time

COVER = "cover"
SPLIT = "split-consistency"
QUALIFICATION = "qualification"
WINDOW = "window"
TIMING = "timing"
DEPENDENCY = "dependency"
CAREGIVERS = "caregiver-count"
CONSECUTIVE = "consecutive-split-parts"
VIOLATION_KINDS = (COVER, SPLIT, QUALIFICATION, WINDOW, TIMING, DEPENDENCY, CAREGIVERS, CONSECUTIVE)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    visits: tuple[int, ...] = ()


@dataclass
class PlanReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def to_obj(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [{"kind": v.kind, "message": v.message, "visits": list(v.visits)} for v in self.violations],
        }

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(f"{v.kind}: {v.message}" for v in self.violations)


def check_plan(plan: Plan, inst: Instance) -> PlanReport:
    """Every violated feasibility condition, each reported under its own kind."""
    rep = PlanReport()
    add = lambda kind, msg, *vs: rep.violations.append(Violation(kind, msg, tuple(vs)))
    known = {v.id for v in inst.visits}
    count: dict[int, int] = {}
    for r in plan.routes:
        for s in r.stops:
            count[s.visit] = count.get(s.visit, 0) + 1
    for vid in sorted(set(count) - known):
        add(COVER, f"unknown visit {vid}", vid)

    # cover: every family appears in exactly one valid shape
    parts = inst.parts
    shapes: dict[int, str] = {}
    for v in inst.visits:
        if v.kind is VisitKind.UNSPLITTABLE:
            if count.get(v.id, 0) != 1:
                add(COVER, f"visit {v.id} performed {count.get(v.id, 0)} times", v.id)
        elif v.kind is VisitKind.SPLITTABLE:
            p1, p2 = parts[v.id]
            c = (count.get(v.id, 0), count.get(p1, 0), count.get(p2, 0))
            if c == (1, 0, 0):
                shapes[v.id] = "whole"
            elif c == (0, 1, 1):
                shapes[v.id] = "split"
            else:
                add(COVER, f"splittable visit {v.id}: original/parts performed {c[0]}/{c[1]}/{c[2]} times", v.id)
    for w, shape in shapes.items():
        decided = plan.splits.get(w)
        if decided is None:
            add(SPLIT, f"no split decision for visit {w}", w)
        elif decided != (shape == "split"):
            add(SPLIT, f"visit {w} performed {shape} but split decision is {decided}", w)
    for w in plan.splits:
        if w not in parts:
            add(SPLIT, f"split decision for non-splittable visit {w}", w)

    for r in plan.routes:
        for s in r.stops:
            if s.visit not in known:
                continue
            v = inst.visit(s.visit)
            if r.qual not in v.quals:
                add(QUALIFICATION, f"visit {v.id} needs {sorted(v.quals)}, route has level {r.qual}", v.id)
            if not v.alpha <= s.start <= v.beta:
                add(WINDOW, f"visit {v.id} starts at {s.start} outside [{v.alpha}, {v.beta}]", v.id)
        for a, b in itertools.pairwise(r.stops):
            if a.visit not in known or b.visit not in known:
                continue
            need = a.start + inst.visit(a.visit).duration + inst.t(a.visit, b.visit)
            if b.start < need:
                add(TIMING, f"visit {b.visit} starts at {b.start}, earliest after {a.visit} is {need}", a.visit, b.visit)
            fa, fb = inst.visit(a.visit), inst.visit(b.visit)
            if fa.kind is VisitKind.PART and fb.kind is VisitKind.PART and fa.parent == fb.parent:
                add(CONSECUTIVE, f"parts {a.visit} and {b.visit} of visit {fa.parent} are consecutive", a.visit, b.visit)

    times = plan.start_times()
    for d in inst.dependencies:
        if d.u in times and d.v in times and not d.satisfied(times[d.u], times[d.v]):
            add(DEPENDENCY, f"starts of {d.u} and {d.v} violate {d.quad}", d.u, d.v)

    used: dict[int, int] = {}
    for r in plan.routes:
        used[r.qual] = used.get(r.qual, 0) + 1
    for q, k in sorted(used.items()):
        if k > inst.caregivers.get(q, 0):
            add(CAREGIVERS, f"{k} routes of level {q}, {inst.caregivers.get(q, 0)} caregivers available")
    return rep


# -- oracle -------------------------------------------------------------------


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_originals: int = 6
    max_horizon: int = 120
    max_caregivers: int = 3


@dataclass
class OracleResult:
    status: str  # "optimal" or "infeasible"
    cost: Fraction | None = None
    plan: Plan | None = None
    route_sets: int = 0


def _objective_of(plan: Plan, inst: Instance, objective: str) -> Fraction:
    return plan_cost(plan, inst) if objective in ("cost", "operational-cost") else Fraction(plan_travel_time(plan, inst))


class _STN:
    """Distance graph over origin 0 and visit nodes 1..k; ``d[i, j]`` bounds ``t_j - t_i``."""

    def __init__(self, k: int):
        self.d = np.full((k + 1, k + 1), np.inf)
        np.fill_diagonal(self.d, 0.0)

    def edge(self, i, j, w):
        if w < self.d[i, j]:
            self.d[i, j] = w

    def close(self) -> bool:
        d = self.d
        for k in range(d.shape[0]):
            np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
        return bool(np.all(np.diag(d) >= 0))

    def fix(self, i: int, value: int) -> "_STN | None":
        """Copy with ``t_i = value`` added, kept minimal; None if inconsistent."""
        out = _STN.__new__(_STN)
        d = self.d.copy()
        for a, b, w in ((0, i, value), (i, 0, -value)):
            if w < d[a, b]:
                np.minimum(d, d[:, a, None] + w + d[None, b, :], out=d)
        if np.any(np.diag(d) < 0):
            return None
        out.d = d
        return out

    def lo(self, i) -> int:
        return int(-self.d[i, 0])

    def hi(self, i) -> int:
        return int(self.d[0, i])


def _route_sets(inst: Instance, required: list[int], objective: str, bound_fn):
    """Yield lists of (qual, sequence) covering ``required``."""
    levels = [q for q in sorted(inst.caregivers) if inst.caregivers[q] > 0]
    vis = {v.id: v for v in inst.visits}
    family = inst.family
    wages = {q: inst.wage(q) for q in levels}
    cost_mode = objective in ("cost", "operational-cost")

    def route_lb(q, seq):
        if cost_mode:
            work = sum(vis[v].duration for v in seq) + sum(inst.t(a, b) for a, b in itertools.pairwise(seq))
            return wages[q] * work
        return Fraction(sum(inst.t(a, b) for a, b in itertools.pairwise(seq)))

    def rest_lb(remaining):
        if not cost_mode:
            return Fraction(0)
        total = Fraction(0)
        for v in remaining:
            ws = [wages[q] for q in vis[v].quals if q in wages]
            if not ws:
                return None
            total += min(ws) * vis[v].duration
        return total

    def sequences(q, remaining, min_first):
        # ordered sequences of remaining visits doable by q, earliest-start feasible
        def ext(seq, earliest_end, last):
            yield list(seq)
            for v in remaining:
                if v in seq or q not in vis[v].quals:
                    continue
                if last is not None and vis[last].kind is VisitKind.PART and vis[v].kind is VisitKind.PART and vis[last].parent == vis[v].parent:
                    continue
                if last is not None and family.get(last) is not None and family.get(last) == family.get(v):
                    continue
                t = max(vis[v].alpha, earliest_end + (inst.t(last, v) if last is not None else 0))
                if t > vis[v].beta:
                    continue
                seq.append(v)
                yield from ext(seq, t + vis[v].duration, v)
                seq.pop()

        for first in remaining:
            if first < min_first or q not in vis[first].quals:
                continue
            yield from ext([first], vis[first].alpha + vis[first].duration, first)

    def rec(li, used, remaining, min_first, acc, partial_lb):
        if not remaining:
            yield list(acc)
            return
        lb = rest_lb(remaining)
        if lb is None or not bound_fn(partial_lb + lb):
            return
        if li >= len(levels):
            return
        q = levels[li]
        # open another route of level q (first visit ids increase within a level)
        if used < inst.caregivers[q]:
            for seq in sequences(q, remaining, min_first):
                r_lb = route_lb(q, seq)
                acc.append((q, tuple(seq)))
                rest = [v for v in remaining if v not in seq]
                yield from rec(li, used + 1, rest, seq[0] + 1, acc, partial_lb + r_lb)
                acc.pop()
        yield from rec(li + 1, 0, remaining, 0, acc, partial_lb)

    yield from rec(0, 0, list(required), 0, [], Fraction(0))


def _timing(inst: Instance, routes, objective: str, incumbent, full_grid: bool):
    """Best start times for fixed routes: (cost, times) or None."""
    visits = [v for _, seq in routes for v in seq]
    idx = {v: i + 1 for i, v in enumerate(visits)}
    base = _STN(len(visits))
    for v in visits:
        vv = inst.visit(v)
        base.edge(0, idx[v], vv.beta)
        base.edge(idx[v], 0, -vv.alpha)
    for _, seq in routes:
        for a, b in itertools.pairwise(seq):
            base.edge(idx[b], idx[a], -(inst.visit(a).duration + inst.t(a, b)))
    performed = set(visits)
    active = [d for d in inst.dependencies if d.u in performed and d.v in performed]
    choices = []
    for d in active:
        opts = []
        for first in (d.u, d.v):
            band = d.band(first, inst.horizon)
            if band is not None:
                opts.append((first, d.v if first == d.u else d.u, band))
        if not opts:
            return None
        choices.append(opts)
    cost_mode = objective in ("cost", "operational-cost")
    fixed_cost = Fraction(sum(inst.t(a, b) for _, seq in routes for a, b in itertools.pairwise(seq)))
    best = None
    for combo in itertools.product(*choices):
        stn = _STN(len(visits))
        stn.d = base.d.copy()
        for first, other, (lo, hi) in combo:
            stn.edge(idx[first], idx[other], hi)
            stn.edge(idx[other], idx[first], -lo)
        if not stn.close():
            continue
        if not cost_mode:
            times = _complete(stn, visits, idx)
            return fixed_cost, times
        found = _min_cost(inst, routes, stn, idx, best[0] if best else incumbent, full_grid)
        if found is not None and (best is None or found[0] < best[0]):
            best = found
    return best


def _complete(stn: _STN, visits, idx, order=None):
    times = {}
    for v in order or visits:
        t = stn.lo(idx[v])
        stn = stn.fix(idx[v], t)
        assert stn is not None  # decomposability
        times[v] = t
    return times


def _min_cost(inst, routes, stn: _STN, idx, incumbent, full_grid):
    wages = [inst.wage(q) for q, _ in routes]
    durs = [inst.visit(seq[-1]).duration for _, seq in routes]
    if full_grid:
        order = [v for _, seq in routes for v in seq]
    else:
        order = []
        for _, seq in routes:
            order.append(seq[0])
            if len(seq) > 1:
                order.append(seq[-1])
    best = [incumbent, None]

    def lower_bound(st: _STN):
        total = Fraction(0)
        for w, d, (_, seq) in zip(wages, durs, routes):
            span = -st.d[idx[seq[-1]], idx[seq[0]]]  # min of t_last - t_first
            total += w * (int(span) + d)
        return total

    def rec(k, st: _STN, assigned):
        lb = lower_bound(st)
        if best[0] is not None and lb >= best[0]:
            return
        if k == len(order):
            rest = [v for _, seq in routes for v in seq if v not in assigned]
            times = dict(assigned)
            times.update(_complete(st, rest, idx))
            best[0], best[1] = lb, times  # all first/last fixed, so lb is exact
            return
        v = order[k]
        lo, hi = st.lo(idx[v]), st.hi(idx[v])
        for t in range(lo, hi + 1):  # ascending: ties resolve to the earliest starts
            nxt = st.fix(idx[v], t)
            if nxt is None:
                continue
            assigned[v] = t
            rec(k + 1, nxt, assigned)
            del assigned[v]

    rec(0, stn, {})
    if best[1] is None:
        return None
    return best[0], best[1]


def _solve_split_vector(args):
    inst, split_vec, objective, full_grid, incumbent = args
    parts = inst.parts
    splits = dict(zip(inst.splittable, split_vec))
    required = []
    for v in inst.visits:
        if v.kind is VisitKind.UNSPLITTABLE:
            required.append(v.id)
        elif v.kind is VisitKind.SPLITTABLE and not splits[v.id]:
            required.append(v.id)
    for w, sp_ in splits.items():
        if sp_:
            required.extend(parts[w])
    best = [incumbent, None]
    n_sets = 0

    def promising(lb):
        return best[0] is None or lb < best[0]

    for rs in _route_sets(inst, sorted(required), objective, promising):
        n_sets += 1
        found = _timing(inst, rs, objective, best[0], full_grid)
        if found is None:
            continue
        cost, times = found
        if best[0] is None or cost < best[0] or best[1] is None and cost <= best[0]:
            routes = tuple(Route(q, tuple(Stop(v, times[v]) for v in seq)) for q, seq in rs)
            best[0], best[1] = cost, Plan(routes=routes, splits=splits)
    return best[0], best[1], n_sets


def brute_force_optimal(
    inst: Instance,
    limits: OracleLimits = OracleLimits(),
    objective: str = "cost",
    full_grid: bool = False,
    jobs: int = 1,
) -> OracleResult:
    """Exact optimum by exhaustive search; raises :class:`TooLarge` outside the guard rails."""
    n_orig = len(inst.originals)
    n_cg = sum(inst.caregivers.values())
    if n_orig > limits.max_originals or inst.horizon > limits.max_horizon or n_cg > limits.max_caregivers:
        raise TooLarge(
            f"{n_orig} visits, horizon {inst.horizon}, {n_cg} caregivers exceed "
            f"({limits.max_originals}, {limits.max_horizon}, {limits.max_caregivers})"
        )
    if not inst.visits:
        return OracleResult("optimal", Fraction(0), Plan(), 0)
    vectors = list(itertools.product((False, True), repeat=len(inst.splittable)))
    results = []
    if jobs > 1 and len(vectors) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_solve_split_vector, [(inst, v, objective, full_grid, None) for v in vectors]))
    else:
        incumbent = None
        for vec in vectors:
            r = _solve_split_vector((inst, vec, objective, full_grid, incumbent))
            results.append(r)
            if r[1] is not None and (incumbent is None or r[0] < incumbent):
                incumbent = r[0]
    total_sets = sum(r[2] for r in results)
    feasible = [(c, p) for c, p, _ in results if p is not None]
    if not feasible:
        return OracleResult("infeasible", route_sets=total_sets)
    cost, plan = min(feasible, key=lambda cp: cp[0])
    assert _objective_of(plan, inst, objective) == cost, "oracle witness cost mismatch"
    assert check_plan(plan, inst).ok, "oracle witness infeasible"
    return OracleResult("optimal", Fraction(cost), plan, total_sets)


# -- metrics ------------------------------------------------------------------


def care_share(plan: Plan, inst: Instance) -> float | None:
    """Fraction of paid working time spent on visits."""
    work = sum(route_working_time(r, inst) for r in plan.routes)
    if work == 0:
        return None
    care = sum(inst.visit(v).duration for v in plan.performed())
    return care / work


def level_shares(plan: Plan, inst: Instance) -> dict[int, float]:
    work = {q: 0 for q in inst.levels}
    for r in plan.routes:
        work[r.qual] = work.get(r.qual, 0) + route_working_time(r, inst)
    total = sum(work.values())
    return {q: (w / total if total else 0.0) for q, w in sorted(work.items())}


def utilized_splits(plan: Plan, inst: Instance) -> float | None:
    if not inst.splittable:
        return None
    return sum(1 for w in inst.splittable if plan.splits.get(w)) / len(inst.splittable)


def compare_metrics(baseline: Plan | None, split: Plan | None, base_inst: Instance, split_inst: Instance | None = None) -> dict:
    """Metric record for a baseline plan against a plan that may split visits.

    Unavailable metrics (missing plan, empty plans) are None.
    """
    split_inst = split_inst or base_inst
    rec = {
        "baseline_cost": None,
        "split_cost": None,
        "cost_decrease_pct": None,
        "utilized_splits_pct": None,
        "baseline_care_pct": None,
        "split_care_pct": None,
        "baseline_caregivers": None,
        "split_caregivers": None,
        "baseline_level_shares": None,
        "split_level_shares": None,
    }
    if baseline is not None:
        bc = plan_cost(baseline, base_inst)
        rec["baseline_cost"] = float(bc)
        cs = care_share(baseline, base_inst)
        rec["baseline_care_pct"] = None if cs is None else 100 * cs
        rec["baseline_caregivers"] = len(baseline.routes)
        rec["baseline_level_shares"] = level_shares(baseline, base_inst)
    if split is not None:
        sc = plan_cost(split, split_inst)
        rec["split_cost"] = float(sc)
        cs = care_share(split, split_inst)
        rec["split_care_pct"] = None if cs is None else 100 * cs
        rec["split_caregivers"] = len(split.routes)
        rec["split_level_shares"] = level_shares(split, split_inst)
        us = utilized_splits(split, split_inst)
        rec["utilized_splits_pct"] = None if us is None else 100 * us
    if baseline is not None and split is not None and rec["baseline_cost"]:
        rec["cost_decrease_pct"] = 100 * (rec["baseline_cost"] - rec["split_cost"]) / rec["baseline_cost"]
    elif baseline is not None and split is not None:
        rec["cost_decrease_pct"] = 0.0
    return rec


def iter_violation_kinds(reports: Iterable[PlanReport]) -> set[str]:
    out = set()
    for r in reports:
        out |= r.kinds
    return out
