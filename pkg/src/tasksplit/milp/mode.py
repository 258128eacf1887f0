from __future__ import annotations

from dataclasses import dataclass

from ..model import Instance, VisitKind
from .spec import LinExpr, ModelSpec

SPLIT_POLICIES = ("optimize", "forbid", "force")
OBJECTIVES = ("operational-cost", "travel-time")


@dataclass(frozen=True)
class SolveMode:
    split_policy: str = "optimize"
    objective: str = "operational-cost"
    preprocessed: bool = True

    def __post_init__(self):
        if self.split_policy not in SPLIT_POLICIES:
            raise ValueError(f"split_policy must be one of {SPLIT_POLICIES}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")

    @property
    def travel_time(self) -> bool:
        return self.objective == "travel-time"


def add_split_vars(m: ModelSpec, inst: Instance, mode: SolveMode) -> dict[int, int]:
    """One binary per splittable visit; the policy fixes bounds, never removes."""
    lb, ub = {"optimize": (0, 1), "forbid": (0, 0), "force": (1, 1)}[mode.split_policy]
    return {w: m.add_var("s", lb, ub) for w in inst.splittable}


def performed_expr(inst: Instance, s: dict[int, int], v: int) -> LinExpr:
    """Right-hand side of the visit cover equation: 1, 1 - s_v or s_parent."""
    vis = inst.visit(v)
    if vis.kind is VisitKind.SPLITTABLE:
        return LinExpr({s[v]: -1.0}, 1.0)
    if vis.kind is VisitKind.PART:
        return LinExpr.var(s[vis.parent])
    return LinExpr(const=1.0)
