"""Compact routing graph over visits plus the artificial start (0) and end (n+1)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .model import SOURCE, Instance


@dataclass(frozen=True)
class RoutingGraph:
    n: int
    start_arcs: tuple[tuple[int, int], ...]
    care_arcs: tuple[tuple[int, int], ...]

    @property
    def sink(self) -> int:
        return self.n + 1

    @property
    def arcs(self) -> tuple[tuple[int, int], ...]:
        return self.start_arcs + self.care_arcs

    def restricted(self, keep) -> "RoutingGraph":
        keep = set(keep)
        return RoutingGraph(
            self.n,
            tuple(a for a in self.start_arcs if a in keep),
            tuple(a for a in self.care_arcs if a in keep),
        )


def care_arc_allowed(inst: Instance, u: int, v: int, windows: Mapping[int, tuple[int, int]] | None = None) -> bool:
    if u == v or inst.same_family(u, v):
        return False
    if not (inst.visit(u).quals & inst.visit(v).quals):
        return False
    au = windows[u][0] if windows else inst.visit(u).alpha
    bv = windows[v][1] if windows else inst.visit(v).beta
    return au + inst.visit(u).duration + inst.t(u, v) <= bv


def build_routing_graph(inst: Instance, windows: Mapping[int, tuple[int, int]] | None = None) -> RoutingGraph:
    ids = [v.id for v in inst.visits]
    start = tuple((SOURCE, v) for v in ids)
    care = [(u, v) for u in ids for v in ids if care_arc_allowed(inst, u, v, windows)]
    care += [(u, inst.sink) for u in ids]
    return RoutingGraph(inst.n, start, tuple(sorted(care)))
