"""Problem data model: visits, temporal dependencies, instances and plans."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

SOURCE = 0


class InstanceError(ValueError):
    """Raised when instance data violates a model invariant.

    ``path`` names the offending field, e.g. ``visits[3].window``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class PlanError(ValueError):
    pass


class VisitKind(str, enum.Enum):
    UNSPLITTABLE = "unsplittable"
    SPLITTABLE = "splittable"
    PART = "part"


@dataclass(frozen=True)
class Qualification:
    level: int
    wage: Fraction

    def __post_init__(self):
        object.__setattr__(self, "wage", to_fraction(self.wage))
        if self.wage < 0:
            raise InstanceError(f"qualifications[{self.level}].wage", "must be nonnegative")


@dataclass(frozen=True)
class Visit:
    id: int
    duration: int
    window: tuple[int, int]
    quals: frozenset[int]
    kind: VisitKind = VisitKind.UNSPLITTABLE
    parent: int | None = None
    part: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "window", (int(self.window[0]), int(self.window[1])))
        object.__setattr__(self, "quals", frozenset(int(q) for q in self.quals))
        object.__setattr__(self, "kind", VisitKind(self.kind))

    @property
    def alpha(self) -> int:
        return self.window[0]

    @property
    def beta(self) -> int:
        return self.window[1]


@dataclass(frozen=True)
class DependencySpec:
    """Allowed start-time differences for a visit pair ``u < v``.

    If ``u`` starts no later than ``v`` then ``t_v - t_u`` must lie in
    ``[dmin_uv, dmax_uv]``; otherwise ``t_u - t_v`` must lie in
    ``[dmin_vu, dmax_vu]``. A direction whose minimum equals the horizon
    can never be realised.
    """

    u: int
    v: int
    dmin_uv: int
    dmax_uv: int
    dmin_vu: int
    dmax_vu: int

    def __post_init__(self):
        if self.u >= self.v:
            raise InstanceError("dependencies", f"pair ({self.u},{self.v}) must satisfy u < v")
        for name in ("dmin_uv", "dmax_uv", "dmin_vu", "dmax_vu"):
            if getattr(self, name) < 0:
                raise InstanceError(f"dependencies[{self.u},{self.v}].{name}", "must be >= 0")
        if self.dmin_uv > self.dmax_uv or self.dmin_vu > self.dmax_vu:
            raise InstanceError(f"dependencies[{self.u},{self.v}]", "minimum exceeds maximum")

    @classmethod
    def between(cls, a: int, b: int, quad: Sequence[int], horizon: int) -> "DependencySpec":
        """Build a spec for ``(a, b)`` given in either order, clamping to the horizon."""
        q = [min(int(x), horizon) for x in quad]
        if a < b:
            return cls(a, b, *q)
        return cls(b, a, q[2], q[3], q[0], q[1])

    @property
    def quad(self) -> tuple[int, int, int, int]:
        return (self.dmin_uv, self.dmax_uv, self.dmin_vu, self.dmax_vu)

    def band(self, first: int, horizon: int) -> tuple[int, int] | None:
        """Band for ``t_other - t_first`` when ``first`` starts first; None if impossible."""
        lo, hi = (self.dmin_uv, self.dmax_uv) if first == self.u else (self.dmin_vu, self.dmax_vu)
        if lo >= horizon:
            return None
        return lo, hi

    def satisfied(self, t_u: int, t_v: int) -> bool:
        return (self.dmin_uv <= t_v - t_u <= self.dmax_uv) or (
            self.dmin_vu <= t_u - t_v <= self.dmax_vu
        )


class SyncType(str, enum.Enum):
    STRICT = "strict"
    LIMIT_START_DIFF = "limit-start-diff"
    OVERLAP = "overlap"
    NO_OVERLAP = "no-overlap"
    U_BEFORE_V_COMPLETED = "u-before-v-completed"
    V_BEFORE_U_COMPLETED = "v-before-u-completed"
    U_BEFORE_V_LIMIT = "u-before-v-limit"
    V_BEFORE_U_LIMIT = "v-before-u-limit"


_TAKES_DELTAS = {SyncType.LIMIT_START_DIFF, SyncType.U_BEFORE_V_LIMIT, SyncType.V_BEFORE_U_LIMIT}


def sync_params(
    sync_type: SyncType | str,
    delta_min: int = 0,
    delta_max: int = 0,
    d_u: int = 0,
    d_v: int = 0,
    horizon: int = 0,
) -> tuple[int, int, int, int]:
    """Return ``(dmin_uv, dmax_uv, dmin_vu, dmax_vu)`` for a synchronization type.

    Values are capped at ``horizon``.
    """
    try:
        st = SyncType(sync_type)
    except ValueError:
        raise ValueError(f"unknown synchronization type {sync_type!r}") from None
    if st in _TAKES_DELTAS and delta_min > delta_max:
        raise ValueError("delta_min must not exceed delta_max")
    T = horizon
    rows = {
        SyncType.STRICT: (0, 0, 0, 0),
        SyncType.LIMIT_START_DIFF: (delta_min, delta_max, delta_min, delta_max),
        SyncType.OVERLAP: (0, d_u, 0, d_v),
        SyncType.NO_OVERLAP: (d_u, T, d_v, T),
        SyncType.U_BEFORE_V_COMPLETED: (d_u, T, T, T),
        SyncType.V_BEFORE_U_COMPLETED: (T, T, d_v, T),
        SyncType.U_BEFORE_V_LIMIT: (delta_min, delta_max, T, T),
        SyncType.V_BEFORE_U_LIMIT: (T, T, delta_min, delta_max),
    }
    return tuple(min(x, T) for x in rows[st])  # type: ignore[return-value]


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True, eq=False)
class Instance:
    horizon: int
    qualifications: tuple[Qualification, ...]
    caregivers: Mapping[int, int]
    visits: tuple[Visit, ...]
    travel: tuple[tuple[int, ...], ...]
    dependencies: tuple[DependencySpec, ...] = ()
    name: str = ""
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "qualifications", tuple(sorted(self.qualifications, key=lambda q: q.level)))
        object.__setattr__(self, "caregivers", {int(k): int(c) for k, c in sorted(self.caregivers.items())})
        object.__setattr__(self, "visits", tuple(sorted(self.visits, key=lambda v: v.id)))
        object.__setattr__(self, "travel", tuple(tuple(int(x) for x in row) for row in self.travel))
        object.__setattr__(self, "dependencies", tuple(sorted(self.dependencies, key=lambda d: (d.u, d.v))))

    # -- structure -------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.visits)

    @property
    def sink(self) -> int:
        return self.n + 1

    @cached_property
    def travel_matrix(self) -> np.ndarray:
        return np.asarray(self.travel, dtype=np.int64)

    def t(self, u: int, v: int) -> int:
        return self.travel[u][v]

    def visit(self, vid: int) -> Visit:
        if not 1 <= vid <= self.n:
            raise KeyError(vid)
        return self.visits[vid - 1]

    @cached_property
    def levels(self) -> tuple[int, ...]:
        return tuple(q.level for q in self.qualifications)

    @cached_property
    def wages(self) -> dict[int, Fraction]:
        return {q.level: q.wage for q in self.qualifications}

    def wage(self, level: int) -> Fraction:
        return self.wages[level]

    @cached_property
    def available_levels(self) -> tuple[int, ...]:
        return tuple(q for q in self.levels if self.caregivers.get(q, 0) > 0)

    def quals_of(self, node: int) -> frozenset[int]:
        if node == SOURCE or node == self.sink:
            return frozenset(self.levels)
        return self.visit(node).quals

    @cached_property
    def splittable(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.visits if v.kind is VisitKind.SPLITTABLE)

    @cached_property
    def parts(self) -> dict[int, tuple[int, int]]:
        out: dict[int, dict[int, int]] = {}
        for v in self.visits:
            if v.kind is VisitKind.PART:
                out.setdefault(v.parent, {})[v.part] = v.id
        return {w: (p[1], p[2]) for w, p in out.items() if 1 in p and 2 in p}

    @cached_property
    def family(self) -> dict[int, int]:
        """Map each splittable visit and its parts to the splittable visit id."""
        fam = {}
        for w, (a, b) in self.parts.items():
            fam[w] = fam[a] = fam[b] = w
        return fam

    def same_family(self, u: int, v: int) -> bool:
        fu = self.family.get(u)
        return fu is not None and fu == self.family.get(v)

    @cached_property
    def originals(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.visits if v.kind is not VisitKind.PART)

    @cached_property
    def dependency_partners(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {v.id: [] for v in self.visits}
        for d in self.dependencies:
            out[d.u].append(d.v)
            out[d.v].append(d.u)
        return out

    def has_dependencies(self, vid: int) -> bool:
        return bool(self.dependency_partners.get(vid))

    def dependency(self, a: int, b: int) -> DependencySpec | None:
        u, v = min(a, b), max(a, b)
        return self._dep_index.get((u, v))

    @cached_property
    def _dep_index(self) -> dict[tuple[int, int], DependencySpec]:
        return {(d.u, d.v): d for d in self.dependencies}

    def performed_condition(self, vid: int) -> tuple[str, int | None]:
        """Return a key describing when a visit is performed.

        ``("always", None)``, ``("unsplit", w)`` or ``("split", w)``.
        Two visits with equal keys are performed together.
        """
        v = self.visit(vid)
        if v.kind is VisitKind.SPLITTABLE:
            return ("unsplit", v.id)
        if v.kind is VisitKind.PART:
            return ("split", v.parent)
        return ("always", None)

    def with_windows(self, windows: Mapping[int, tuple[int, int]]) -> "Instance":
        visits = tuple(replace(v, window=windows.get(v.id, v.window)) for v in self.visits)
        return replace(self, visits=visits)

    def with_caregivers(self, caregivers: Mapping[int, int]) -> "Instance":
        return replace(self, caregivers=dict(caregivers))


def validate_instance(inst: Instance) -> Instance:
    """Check every instance invariant; raise :class:`InstanceError` naming the field."""
    T = inst.horizon
    if T <= 0:
        raise InstanceError("horizon", "must be positive")
    levels = [q.level for q in inst.qualifications]
    if len(set(levels)) != len(levels):
        raise InstanceError("qualifications", "levels must be distinct")
    for lvl, cnt in inst.caregivers.items():
        if lvl not in levels:
            raise InstanceError(f"caregivers.{lvl}", "unknown qualification level")
        if cnt < 0:
            raise InstanceError(f"caregivers.{lvl}", "count must be nonnegative")
    for i, v in enumerate(inst.visits):
        path = f"visits[{i}]"
        if v.id != i + 1:
            raise InstanceError(f"{path}.id", f"visit ids must be 1..n in order, got {v.id}")
        if not 0 < v.duration <= T:
            raise InstanceError(f"{path}.duration", "must satisfy 0 < d <= horizon")
        a, b = v.window
        if not (0 <= a < b <= T - v.duration):
            raise InstanceError(f"{path}.window", f"[{a},{b}] must satisfy 0 <= a < b <= horizon - duration")
        if not v.quals:
            raise InstanceError(f"{path}.quals", "must be nonempty")
        unknown = v.quals - set(levels)
        if unknown:
            raise InstanceError(f"{path}.quals", f"unknown levels {sorted(unknown)}")
        if v.kind is VisitKind.PART:
            if v.parent is None or v.part not in (1, 2):
                raise InstanceError(f"{path}", "split part needs parent and part index 1 or 2")
            if not 1 <= v.parent <= inst.n or inst.visit(v.parent).kind is not VisitKind.SPLITTABLE:
                raise InstanceError(f"{path}.parent", "must reference a splittable visit")
    for w in inst.splittable:
        if w not in inst.parts:
            raise InstanceError(f"visits[{w - 1}]", "splittable visit needs exactly two parts")
    counts: dict[int, list[int]] = {}
    for v in inst.visits:
        if v.kind is VisitKind.PART:
            counts.setdefault(v.parent, []).append(v.part)
    for w, ps in counts.items():
        if sorted(ps) != [1, 2]:
            raise InstanceError(f"visits[{w - 1}]", "splittable visit needs exactly two parts")
    size = inst.n + 2
    tt = inst.travel
    if len(tt) != size or any(len(row) != size for row in tt):
        raise InstanceError("travel", f"must be a {size}x{size} matrix")
    M = inst.travel_matrix
    if (M < 0).any():
        raise InstanceError("travel", "entries must be nonnegative")
    if M[0, :].any():
        raise InstanceError("travel[0]", "travel from the start node must be zero")
    if M[:, inst.sink].any():
        raise InstanceError(f"travel[*][{inst.sink}]", "travel to the end node must be zero")
    core = M[1:-1, 1:-1]
    if core.size:
        # t_uv <= t_uw + t_wv for all u, w, v
        via = core[:, :, None] + core[None, :, :]  # via[u, w, v]
        bad = np.argwhere(core[:, None, :] > via)
        if len(bad):
            u, w, v = (int(x) + 1 for x in bad[0])
            raise InstanceError("travel", f"triangle inequality violated for ({u},{w},{v})")
    seen = set()
    for d in inst.dependencies:
        path = f"dependencies[{d.u},{d.v}]"
        if not (1 <= d.u <= inst.n and 1 <= d.v <= inst.n):
            raise InstanceError(path, "references an unknown visit")
        if (d.u, d.v) in seen:
            raise InstanceError(path, "duplicate pair")
        seen.add((d.u, d.v))
        if max(d.quad) > T:
            raise InstanceError(path, "values must not exceed the horizon")
    return inst


# -- plans --------------------------------------------------------------


@dataclass(frozen=True)
class Stop:
    visit: int
    start: int


@dataclass(frozen=True)
class Route:
    qual: int
    stops: tuple[Stop, ...]

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(self.stops))

    @property
    def visits(self) -> list[int]:
        return [s.visit for s in self.stops]


@dataclass(frozen=True, eq=False)
class Plan:
    routes: tuple[Route, ...] = ()
    splits: Mapping[int, bool] = field(default_factory=dict)
    objective: float | None = None
    bound: float | None = None
    gap: float | None = None
    status: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(r for r in self.routes if r.stops))
        object.__setattr__(self, "splits", {int(k): bool(v) for k, v in sorted(self.splits.items())})

    def performed(self) -> list[int]:
        return [s.visit for r in self.routes for s in r.stops]

    def start_times(self) -> dict[int, int]:
        return {s.visit: s.start for r in self.routes for s in r.stops}

    def with_status(self, **kw) -> "Plan":
        return replace(self, **kw)

    def __eq__(self, other):
        if not isinstance(other, Plan):
            return NotImplemented
        return (self.routes, dict(self.splits)) == (other.routes, dict(other.splits))


def _check_refs(plan: Plan, inst: Instance) -> None:
    for r in plan.routes:
        for s in r.stops:
            if not 1 <= s.visit <= inst.n:
                raise PlanError(f"route references unknown visit {s.visit}")
        if r.qual not in inst.wages:
            raise PlanError(f"route uses unknown qualification {r.qual}")


def route_working_time(route: Route, inst: Instance) -> int:
    if not route.stops:
        return 0
    last = route.stops[-1]
    return last.start + inst.visit(last.visit).duration - route.stops[0].start


def plan_cost(plan: Plan, inst: Instance) -> Fraction:
    """Total wage-weighted working time, from first start to last end per route."""
    _check_refs(plan, inst)
    return sum((inst.wage(r.qual) * route_working_time(r, inst) for r in plan.routes), Fraction(0))


def plan_travel_time(plan: Plan, inst: Instance) -> int:
    """Sum of travel times between consecutive visits over all routes."""
    _check_refs(plan, inst)
    return sum(
        inst.t(a.visit, b.visit) for r in plan.routes for a, b in itertools.pairwise(r.stops)
    )


def plan_objective(plan: Plan, inst: Instance, objective: str = "cost") -> Fraction:
    if objective in ("cost", "operational-cost"):
        return plan_cost(plan, inst)
    return Fraction(plan_travel_time(plan, inst))


def iter_arcs(route: Route, inst: Instance) -> Iterable[tuple[int, int]]:
    """Routing-graph arcs traversed by a route, including depot legs."""
    vs = route.visits
    if not vs:
        return
    yield (SOURCE, vs[0])
    yield from itertools.pairwise(vs)
    yield (vs[-1], inst.sink)
