"""JSON (de)serialization for instances and plans.

Output is canonical: sorted keys and compact separators, so equal values give
equal bytes.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from fractions import Fraction
from pathlib import Path

from .model import (
    DependencySpec,
    Instance,
    InstanceError,
    Plan,
    PlanError,
    Qualification,
    Route,
    Stop,
    Visit,
    VisitKind,
    validate_instance,
)


def dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def _loads(data) -> object:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InstanceError("$", f"not UTF-8: {exc}") from None
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceError("$", f"invalid JSON: {exc}") from None


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(path, f"expected integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise InstanceError(path, f"expected integer, got {value!r}")
        value = int(value)
    return value


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise InstanceError(path, "expected object")
    if key not in obj:
        raise InstanceError(f"{path}.{key}" if path != "$" else key, "missing")
    return obj[key]


def _wage(value, path: str) -> Fraction:
    try:
        if isinstance(value, bool):
            raise ValueError
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, float):
            if not math.isfinite(value):
                raise ValueError
            return Fraction(str(value))
        if isinstance(value, int):
            return Fraction(value)
    except (ValueError, ZeroDivisionError):
        pass
    raise InstanceError(path, f"expected rational wage, got {value!r}")


def wage_to_json(w: Fraction):
    return w.numerator if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def instance_from_obj(obj) -> Instance:
    if not isinstance(obj, dict):
        raise InstanceError("$", "expected object")
    horizon = _int(_require(obj, "horizon", "$"), "horizon")
    quals_raw = _require(obj, "qualifications", "$")
    if not isinstance(quals_raw, list):
        raise InstanceError("qualifications", "expected list")
    quals = []
    for i, q in enumerate(quals_raw):
        p = f"qualifications[{i}]"
        level = _int(_require(q, "level", p), f"{p}.level")
        if level <= 0:
            raise InstanceError(f"{p}.level", "must be positive")
        quals.append(Qualification(level, _wage(_require(q, "wage", p), f"{p}.wage")))
    cg_raw = _require(obj, "caregivers", "$")
    if not isinstance(cg_raw, dict):
        raise InstanceError("caregivers", "expected object")
    caregivers = {}
    for k, c in cg_raw.items():
        try:
            lvl = int(k)
        except ValueError:
            raise InstanceError(f"caregivers.{k}", "key must be a level") from None
        caregivers[lvl] = _int(c, f"caregivers.{k}")
    visits_raw = _require(obj, "visits", "$")
    if not isinstance(visits_raw, list):
        raise InstanceError("visits", "expected list")
    visits = []
    for i, v in enumerate(visits_raw):
        p = f"visits[{i}]"
        win = _require(v, "window", p)
        if not isinstance(win, list) or len(win) != 2:
            raise InstanceError(f"{p}.window", "expected [start, end]")
        qs = _require(v, "quals", p)
        if not isinstance(qs, list):
            raise InstanceError(f"{p}.quals", "expected list")
        kind_raw = v.get("kind", "unsplittable")
        try:
            kind = VisitKind(kind_raw)
        except ValueError:
            raise InstanceError(f"{p}.kind", f"unknown kind {kind_raw!r}") from None
        parent = v.get("parent")
        part = v.get("part")
        if kind is VisitKind.PART:
            parent = _int(parent, f"{p}.parent")
            part = _int(part, f"{p}.part")
        elif parent is not None or part is not None:
            raise InstanceError(p, "parent/part only allowed on split parts")
        visits.append(
            Visit(
                id=_int(_require(v, "id", p), f"{p}.id"),
                duration=_int(_require(v, "duration", p), f"{p}.duration"),
                window=(_int(win[0], f"{p}.window[0]"), _int(win[1], f"{p}.window[1]")),
                quals=frozenset(_int(x, f"{p}.quals") for x in qs),
                kind=kind,
                parent=parent,
                part=part,
            )
        )
    ids = [v.id for v in visits]
    if ids != list(range(1, len(visits) + 1)):
        raise InstanceError("visits", "ids must be 1..n in list order")
    travel = _require(obj, "travel", "$")
    if not isinstance(travel, list) or not all(isinstance(r, list) for r in travel):
        raise InstanceError("travel", "expected matrix")
    travel = [[_int(x, f"travel[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(travel)]
    deps = []
    for i, d in enumerate(obj.get("dependencies", []) or []):
        p = f"dependencies[{i}]"
        vals = [_int(_require(d, k, p), f"{p}.{k}") for k in ("u", "v", "dmin_uv", "dmax_uv", "dmin_vu", "dmax_vu")]
        if vals[0] >= vals[1]:
            raise InstanceError(f"{p}", "u must be smaller than v")
        try:
            deps.append(DependencySpec.between(vals[0], vals[1], vals[2:], horizon))
        except InstanceError as exc:
            raise InstanceError(p, str(exc)) from None
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise InstanceError("meta", "expected object")
    inst = Instance(
        horizon=horizon,
        qualifications=tuple(quals),
        caregivers=caregivers,
        visits=tuple(visits),
        travel=tuple(tuple(r) for r in travel),
        dependencies=tuple(deps),
        name=str(obj.get("name", "")),
        meta=meta,
    )
    return validate_instance(inst)


def parse_instance(data) -> Instance:
    return instance_from_obj(_loads(data))


def instance_to_obj(inst: Instance) -> dict:
    visits = []
    for v in inst.visits:
        rec = {
            "id": v.id,
            "duration": v.duration,
            "window": [v.alpha, v.beta],
            "quals": sorted(v.quals),
            "kind": v.kind.value,
        }
        if v.kind is VisitKind.PART:
            rec["parent"] = v.parent
            rec["part"] = v.part
        visits.append(rec)
    obj = {
        "horizon": inst.horizon,
        "qualifications": [{"level": q.level, "wage": wage_to_json(q.wage)} for q in inst.qualifications],
        "caregivers": {str(k): c for k, c in inst.caregivers.items()},
        "visits": visits,
        "travel": [list(r) for r in inst.travel],
        "dependencies": [
            {"u": d.u, "v": d.v, "dmin_uv": d.dmin_uv, "dmax_uv": d.dmax_uv, "dmin_vu": d.dmin_vu, "dmax_vu": d.dmax_vu}
            for d in inst.dependencies
        ],
    }
    if inst.name:
        obj["name"] = inst.name
    if inst.meta:
        obj["meta"] = dict(inst.meta)
    return obj


def serialize_instance(inst: Instance) -> bytes:
    return dumps(instance_to_obj(inst))


def canonical(data) -> bytes:
    return serialize_instance(parse_instance(data))


def _num(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else float(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            return None
        if x.is_integer() and abs(x) < 2**53:
            return int(x)
    return x


def plan_to_obj(plan: Plan) -> dict:
    return {
        "routes": [
            {"qual": r.qual, "stops": [{"visit": s.visit, "start": s.start} for s in r.stops]}
            for r in plan.routes
        ],
        "splits": {str(k): v for k, v in plan.splits.items()},
        "objective": _num(plan.objective),
        "bound": _num(plan.bound),
        "gap": plan.gap,
        "status": plan.status,
    }


def serialize_plan(plan: Plan) -> bytes:
    return dumps(plan_to_obj(plan))


def plan_from_obj(obj) -> Plan:
    if not isinstance(obj, dict):
        raise PlanError("plan: expected object")
    if "plan" in obj and "routes" not in obj:
        # a SolveResult document
        obj = obj["plan"]
        if obj is None:
            raise PlanError("result carries no plan")
    try:
        routes = []
        for i, r in enumerate(obj.get("routes", [])):
            stops = tuple(Stop(int(s["visit"]), int(s["start"])) for s in r["stops"])
            routes.append(Route(int(r["qual"]), stops))
        splits = {int(k): bool(v) for k, v in (obj.get("splits") or {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"malformed plan: {exc!r}") from None
    return Plan(
        routes=tuple(routes),
        splits=splits,
        objective=obj.get("objective"),
        bound=obj.get("bound"),
        gap=obj.get("gap"),
        status=obj.get("status"),
    )


def parse_plan(data) -> Plan:
    try:
        obj = _loads(data)
    except InstanceError as exc:
        raise PlanError(str(exc)) from None
    return plan_from_obj(obj)


def read_instance(path) -> Instance:
    return parse_instance(Path(path).read_bytes())


def write_atomic(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
