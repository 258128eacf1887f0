"""Benchmark scenario generation: qualification profiles, staff mixes, split synthesis.

Randomness comes from numpy's PCG64 generator. For split synthesis each
original visit of at least 60 minutes consumes exactly five draws, in id
order: duration delta, split point, qualification relaxation, window
relaxation, dependency type.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .io import dumps
from .model import (
    DependencySpec,
    Instance,
    InstanceError,
    Qualification,
    SyncType,
    Visit,
    VisitKind,
    sync_params,
    validate_instance,
)

LEVELS = (1, 2, 3)
WAGES = {1: 1, 2: 2, 3: 3}

VISIT_PROFILES = {
    "general": (50, 25, 25),
    "balanced": (Fraction(100, 3), Fraction(100, 3), Fraction(100, 3)),
    "medical": (25, 25, 50),
}
STAFF_PROFILES = {
    "practical": (50, 25, 25),
    "moderate": (25, 50, 25),
    "medical": (25, 25, 50),
    "only-medical": (0, 0, 100),
}
# 3 visit profiles x 3 staff profiles, plus balanced visits with only-medical staff
SCENARIO_GRID = [(vp, sp) for vp in ("general", "balanced", "medical") for sp in ("practical", "moderate", "medical")]
SCENARIO_GRID.append(("balanced", "only-medical"))

MIN_SPLIT_DURATION = 60
MIN_PART_DURATION = 30
DELTA_MIN_DURATION = 75
DURATION_DELTAS = (-15, 0, 15)
WINDOW_RELAX = 60
DEP_TYPES = ("none", "precedence", "disjunction")


@dataclass(frozen=True)
class BaseInstance:
    """User-supplied base data; travel is indexed by visit position (0-based)."""

    horizon: int
    durations: tuple[int, ...]
    windows: tuple[tuple[int, int], ...]
    travel: tuple[tuple[int, ...], ...]
    caregivers: int
    sync_pairs: tuple[tuple[int, int], ...] = ()
    locations: tuple[tuple[float, float], ...] | None = None
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.durations)

    def validate(self) -> "BaseInstance":
        n = self.n
        if n == 0:
            raise InstanceError("durations", "base instance needs at least one visit")
        if len(self.windows) != n:
            raise InstanceError("windows", f"expected {n} windows")
        if len(self.travel) != n or any(len(r) != n for r in self.travel):
            raise InstanceError("travel", f"expected {n}x{n} matrix")
        if self.caregivers <= 0:
            raise InstanceError("caregivers", "must be positive")
        for i, (a, b) in enumerate(self.windows):
            d = self.durations[i]
            if not 0 < d <= self.horizon or not 0 <= a < b <= self.horizon - d:
                raise InstanceError(f"windows[{i}]", f"[{a},{b}] invalid for duration {d}")
        for k, (i, j) in enumerate(self.sync_pairs):
            if not (0 <= i < n and 0 <= j < n and i != j):
                raise InstanceError(f"sync_pairs[{k}]", "bad visit index")
        # triangle inequality is checked by the full instance validator
        return self

    def to_json(self) -> bytes:
        obj = {
            "horizon": self.horizon,
            "durations": list(self.durations),
            "windows": [list(w) for w in self.windows],
            "travel": [list(r) for r in self.travel],
            "caregivers": self.caregivers,
            "sync_pairs": [list(p) for p in self.sync_pairs],
        }
        if self.locations is not None:
            obj["locations"] = [list(p) for p in self.locations]
        if self.name:
            obj["name"] = self.name
        return dumps(obj)

    @classmethod
    def from_json(cls, data) -> "BaseInstance":
        try:
            obj = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InstanceError("$", f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise InstanceError("$", "expected object")
        try:
            durations = tuple(int(x) for x in obj["durations"])
            base = cls(
                horizon=int(obj["horizon"]),
                durations=durations,
                windows=tuple((int(a), int(b)) for a, b in obj["windows"]),
                travel=tuple(tuple(int(x) for x in r) for r in obj["travel"]),
                caregivers=int(obj.get("caregivers", max(1, round(len(durations) / 5)))),
                sync_pairs=tuple((int(a), int(b)) for a, b in obj.get("sync_pairs", [])),
                locations=tuple(tuple(p) for p in obj["locations"]) if obj.get("locations") else None,
                name=str(obj.get("name", "")),
            )
        except KeyError as exc:
            raise InstanceError(str(exc.args[0]), "missing") from None
        except (TypeError, ValueError) as exc:
            raise InstanceError("$", f"malformed base instance: {exc}") from None
        return base.validate()


def _metric_closure(m: np.ndarray) -> np.ndarray:
    m = m.copy()
    for k in range(len(m)):
        np.minimum(m, m[:, [k]] + m[[k], :], out=m)
    return m


def random_base_instance(n: int, seed: int, horizon: int = 540, grid: int = 30, width_choices=(30, 60, 90, 120)) -> BaseInstance:
    """Random base instance in the style of the classic synchronized-visit benchmarks."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, grid, size=(n, 2))
    dist = np.ceil(np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))).astype(np.int64)
    np.fill_diagonal(dist, 0)
    dist = _metric_closure(dist)
    durations = [int(x) for x in rng.choice([30, 45, 60, 75, 90, 105, 120], size=n, p=[0.2, 0.2, 0.2, 0.15, 0.1, 0.1, 0.05])]
    windows = []
    for d in durations:
        width = int(rng.choice(width_choices))
        latest = horizon - d
        a = int(rng.integers(0, max(1, latest - width)))
        windows.append((a, min(a + width, latest)))
    n_pairs = n // 10
    order = rng.permutation(n)
    pairs = []
    for k in range(n_pairs):
        i, j = sorted((int(order[2 * k]), int(order[2 * k + 1])))
        durations[j] = durations[i]
        latest = horizon - durations[i]
        a, b = windows[i]
        windows[i] = windows[j] = (min(a, latest - 1), min(b, latest))
        pairs.append((i, j))
    return BaseInstance(
        horizon=horizon,
        durations=tuple(durations),
        windows=tuple(windows),
        travel=tuple(tuple(int(x) for x in r) for r in dist),
        caregivers=max(1, round(n / 5)),
        sync_pairs=tuple(pairs),
        locations=tuple((round(float(x), 3), round(float(y), 3)) for x, y in pts),
        name=f"base-{n}-{seed}",
    ).validate()


def largest_remainder(total: int, shares) -> list[int]:
    """Apportion ``total`` by percentage ``shares``; ties go to the earlier entry."""
    shares = [Fraction(s) for s in shares]
    s = sum(shares)
    if s != 100:
        raise ValueError(f"profile shares sum to {s}, not 100")
    quotas = [total * x / 100 for x in shares]
    counts = [math.floor(q) for q in quotas]
    rest = total - sum(counts)
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


@dataclass(frozen=True)
class ScenarioConfig:
    visit_profile: str
    staff_profile: str
    rng_seed: int = 0

    def __post_init__(self):
        if self.visit_profile not in VISIT_PROFILES:
            raise ValueError(f"unknown visit profile {self.visit_profile!r}")
        if self.staff_profile not in STAFF_PROFILES:
            raise ValueError(f"unknown staff profile {self.staff_profile!r}")

    @property
    def label(self) -> str:
        return f"{self.visit_profile}-{self.staff_profile}"


def assign_levels(n: int, profile: str, seed: int) -> list[int]:
    """Required level per visit (0-based positions).

    The general profile is the reference. Other profiles move only the
    surplus visits of a level, latest in a seeded order first, so that as
    many visits as possible keep their level.
    """
    perm = [int(i) for i in np.random.default_rng([seed, 0x5CE]).permutation(n)]
    ref_counts = largest_remainder(n, VISIT_PROFILES["general"])
    level = [0] * n
    pos = 0
    for lvl, c in zip(LEVELS, ref_counts):
        for i in perm[pos : pos + c]:
            level[i] = lvl
        pos += c
    target = dict(zip(LEVELS, largest_remainder(n, VISIT_PROFILES[profile])))
    rank = {v: r for r, v in enumerate(perm)}
    pool = []
    for lvl in LEVELS:
        members = sorted((i for i in range(n) if level[i] == lvl), key=rank.__getitem__)
        pool.extend(members[target[lvl]:])
    pool.sort(key=rank.__getitem__)
    for lvl in LEVELS:
        deficit = target[lvl] - sum(1 for x in level if x == lvl) + sum(1 for i in pool if level[i] == lvl)
        for _ in range(deficit):
            level[pool.pop(0)] = lvl
    return level


def quals_for(level: int) -> frozenset[int]:
    """Caregivers of the required level or higher may perform a visit."""
    return frozenset(q for q in LEVELS if q >= level)


def generate_scenarios(base: BaseInstance, config: ScenarioConfig) -> Instance:
    base.validate()
    n = base.n
    levels = assign_levels(n, config.visit_profile, config.rng_seed)
    staff = largest_remainder(base.caregivers, STAFF_PROFILES[config.staff_profile])
    visits = tuple(
        Visit(id=i + 1, duration=base.durations[i], window=base.windows[i], quals=quals_for(levels[i]))
        for i in range(n)
    )
    travel = np.zeros((n + 2, n + 2), dtype=np.int64)
    travel[1 : n + 1, 1 : n + 1] = np.asarray(base.travel)
    deps = tuple(
        DependencySpec.between(i + 1, j + 1, sync_params(SyncType.STRICT, horizon=base.horizon), base.horizon)
        for i, j in base.sync_pairs
    )
    inst = Instance(
        horizon=base.horizon,
        qualifications=tuple(Qualification(q, WAGES[q]) for q in LEVELS),
        caregivers={q: c for q, c in zip(LEVELS, staff) if c > 0},
        visits=visits,
        travel=tuple(tuple(int(x) for x in r) for r in travel),
        dependencies=deps,
        name=f"{base.name}-{config.label}" if base.name else config.label,
        meta={"visit_profile": config.visit_profile, "staff_profile": config.staff_profile, "seed": config.rng_seed},
    )
    return validate_instance(inst)


@dataclass(frozen=True)
class SplitDraw:
    """Outcome of the five draws for one splittable visit."""

    delta: int
    d1: int
    d2: int
    relax_part: int | None
    window_part: int | None
    dep_type: str


def draw_split(rng: np.random.Generator, duration: int) -> SplitDraw:
    r_delta = int(rng.integers(3))
    r_point = float(rng.random())
    r_qual = int(rng.integers(8))
    r_win = int(rng.integers(8))
    r_dep = int(rng.integers(3))
    delta = DURATION_DELTAS[r_delta] if duration >= DELTA_MIN_DURATION else 0
    total = duration + delta
    n_splits = total - 2 * MIN_PART_DURATION + 1
    d1 = MIN_PART_DURATION + min(int(r_point * n_splits), n_splits - 1)
    # values 0..5 of an 8-sided draw relax (p = 0.75); parity picks the part
    relax = 1 + r_qual % 2 if r_qual < 6 else None
    win = 1 + r_win % 2 if r_win < 6 else None
    return SplitDraw(delta, d1, total - d1, relax, win, DEP_TYPES[r_dep])


def synthesize_splits(inst: Instance, rng_seed: int) -> Instance:
    """Make every original visit of at least 60 minutes splittable."""
    if any(v.kind is not VisitKind.UNSPLITTABLE for v in inst.visits):
        raise ValueError("instance already contains splittable visits")
    T = inst.horizon
    rng = np.random.default_rng(rng_seed)
    strict_partner: dict[int, list[int]] = {}
    for d in inst.dependencies:
        if d.quad == (0, 0, 0, 0):
            strict_partner.setdefault(d.u, []).append(d.v)
            strict_partner.setdefault(d.v, []).append(d.u)
    draws: dict[int, SplitDraw] = {}
    for v in inst.visits:
        if v.duration < MIN_SPLIT_DURATION:
            continue
        own = draw_split(rng, v.duration)
        twin = next(
            (draws[p] for p in strict_partner.get(v.id, []) if p in draws and inst.visit(p).duration == v.duration),
            None,
        )
        draws[v.id] = twin or own

    n0 = inst.n
    visits = [v if v.id not in draws else Visit(v.id, v.duration, v.window, v.quals, VisitKind.SPLITTABLE) for v in inst.visits]
    parts: dict[int, tuple[int, int]] = {}
    src = [0] + list(range(1, n0 + 1))  # location source for each new id
    deps = list(inst.dependencies)
    next_id = n0 + 1
    for vid in sorted(draws):
        v = inst.visit(vid)
        dr = draws[vid]
        ids = []
        for k, dk in ((1, dr.d1), (2, dr.d2)):
            quals = frozenset({1}) | v.quals if dr.relax_part == k else v.quals
            latest = T - dk
            beta = min(v.beta, latest)
            if dr.window_part == k:
                beta = min(v.beta + WINDOW_RELAX, latest)
            alpha = min(v.alpha, beta - 1)
            visits.append(Visit(next_id, dk, (alpha, beta), quals, VisitKind.PART, parent=vid, part=k))
            src.append(vid)
            ids.append(next_id)
            next_id += 1
        parts[vid] = (ids[0], ids[1])
        if dr.dep_type == "precedence":
            q = sync_params(SyncType.U_BEFORE_V_COMPLETED, d_u=dr.d1, horizon=T)
            deps.append(DependencySpec.between(ids[0], ids[1], q, T))
        elif dr.dep_type == "disjunction":
            q = sync_params(SyncType.NO_OVERLAP, d_u=dr.d1, d_v=dr.d2, horizon=T)
            deps.append(DependencySpec.between(ids[0], ids[1], q, T))
    # corresponding parts of strictly synchronized visits start together
    for d in inst.dependencies:
        if d.quad == (0, 0, 0, 0) and d.u in parts and d.v in parts:
            for a, b in zip(parts[d.u], parts[d.v]):
                deps.append(DependencySpec.between(a, b, (0, 0, 0, 0), T))
    src.append(0)
    M = inst.travel_matrix
    idx = np.asarray(src)
    travel = M[np.ix_(idx, idx)].copy()
    # node n+1 of the new instance plays the old sink role: zero inbound
    travel[:, -1] = 0
    travel[0, :] = 0
    for w, (a, b) in parts.items():
        for x in (w, a, b):
            for y in (w, a, b):
                travel[x, y] = 0
    meta = dict(inst.meta)
    meta["split_seed"] = rng_seed
    out = Instance(
        horizon=T,
        qualifications=inst.qualifications,
        caregivers=inst.caregivers,
        visits=tuple(visits),
        travel=tuple(tuple(int(x) for x in r) for r in travel),
        dependencies=tuple(deps),
        name=inst.name,
        meta=meta,
    )
    return validate_instance(out)


def scenario_grid(base: BaseInstance, seed: int) -> list[Instance]:
    """The ten benchmark scenarios of one base instance, with split synthesis."""
    return [
        synthesize_splits(generate_scenarios(base, ScenarioConfig(vp, sp, seed)), seed)
        for vp, sp in SCENARIO_GRID
    ]
