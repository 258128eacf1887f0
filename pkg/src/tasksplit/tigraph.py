"""Time-indexed graph: one node per visit and feasible start minute.

Nodes are dense integers. Node 0 is the route start, the last node is the
route end, and visit nodes in between are ordered by (visit, time).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import Instance

START, CARE, WAIT = 0, 1, 2
KIND_NAMES = {START: "start", CARE: "care", WAIT: "wait"}


@dataclass(frozen=True, eq=False)
class TimeIndexedGraph:
    instance: Instance
    windows: Mapping[int, tuple[int, int]]
    node_visit: np.ndarray  # 0 for the start node, n+1 for the end node
    node_time: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    kind: np.ndarray
    cost: np.ndarray
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            idx = {(int(v), int(t)): i for i, (v, t) in enumerate(zip(self.node_visit, self.node_time))}
            object.__setattr__(self, "_index", idx)

    @property
    def n_nodes(self) -> int:
        return len(self.node_visit)

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.n_nodes - 1

    def node(self, visit: int, t: int) -> int | None:
        return self._index.get((visit, t))

    def nodes_of(self, visit: int) -> np.ndarray:
        return np.flatnonzero(self.node_visit == visit)

    def arc_visits(self) -> tuple[np.ndarray, np.ndarray]:
        return self.node_visit[self.tail], self.node_visit[self.head]

    def is_end(self) -> np.ndarray:
        return self.head == self.sink

    def travel_cost(self) -> np.ndarray:
        """Per-arc travel time (nonzero only on care arcs between visits)."""
        tu, tv = self.arc_visits()
        M = self.instance.travel_matrix
        out = np.zeros(self.n_arcs, dtype=np.int64)
        m = (self.kind == CARE) & (self.head != self.sink)
        out[m] = M[tu[m], tv[m]]
        return out

    def arcs(self):
        for a in range(self.n_arcs):
            yield int(self.tail[a]), int(self.head[a]), KIND_NAMES[int(self.kind[a])], int(self.cost[a])

    def with_arcs(self, tail, head, kind, cost) -> "TimeIndexedGraph":
        """Graph with a new arc list; nodes without incident arcs are dropped."""
        tail = np.asarray(tail, dtype=np.int64)
        head = np.asarray(head, dtype=np.int64)
        used = np.zeros(self.n_nodes, dtype=bool)
        used[tail] = True
        used[head] = True
        used[0] = used[self.sink] = True
        new_id = np.cumsum(used) - 1
        order = np.lexsort((head, tail, kind)) if len(tail) else np.arange(0)
        return TimeIndexedGraph(
            self.instance,
            self.windows,
            self.node_visit[used],
            self.node_time[used],
            new_id[tail][order],
            new_id[head][order],
            np.asarray(kind, dtype=np.int8)[order],
            np.asarray(cost, dtype=np.int64)[order],
        )

    def subgraph(self, arc_mask) -> "TimeIndexedGraph":
        m = np.asarray(arc_mask, dtype=bool)
        return self.with_arcs(self.tail[m], self.head[m], self.kind[m], self.cost[m])

    def is_acyclic(self) -> bool:
        # every arc strictly increases time, or ends at the sink
        inner = (self.head != self.sink) & (self.tail != 0)
        return bool(np.all(self.node_time[self.head[inner]] > self.node_time[self.tail[inner]]))

    def to_dot(self, arc_mask=None) -> str:
        """Graphviz rendering, for debugging small graphs."""
        m = np.ones(self.n_arcs, dtype=bool) if arc_mask is None else np.asarray(arc_mask, dtype=bool)
        name = {0: "0", self.sink: "end"}
        lines = ["digraph ti {", "  rankdir=LR;"]
        style = {START: "dotted", CARE: "solid", WAIT: "dashed"}
        for a in np.flatnonzero(m):
            t, h = int(self.tail[a]), int(self.head[a])
            ln = [name.get(x, f"v{self.node_visit[x]}_{self.node_time[x]}") for x in (t, h)]
            lines.append(f'  "{ln[0]}" -> "{ln[1]}" [style={style[int(self.kind[a])]}, label="{int(self.cost[a])}"];')
        lines.append("}")
        return "\n".join(lines)


def build_ti_graph(inst: Instance, windows: Mapping[int, tuple[int, int]] | None = None) -> TimeIndexedGraph:
    if windows is None:
        windows = {v.id: v.window for v in inst.visits}
    windows = {int(k): (int(a), int(b)) for k, (a, b) in windows.items()}
    nv, nt = [0], [0]
    first = {}
    for v in inst.visits:
        a, b = windows[v.id]
        first[v.id] = len(nv)
        ts = list(range(a, b + 1))
        nv.extend([v.id] * len(ts))
        nt.extend(ts)
    sink = len(nv)
    nv.append(inst.sink)
    nt.append(inst.horizon)
    tails, heads, kinds, costs = [], [], [], []

    def add(t, h, k, c):
        tails.append(np.asarray(t, dtype=np.int64))
        heads.append(np.asarray(h, dtype=np.int64))
        kinds.append(np.full(len(tails[-1]), k, dtype=np.int8))
        costs.append(np.asarray(c, dtype=np.int64))

    for v in inst.visits:
        a, b = windows[v.id]
        if a > b:
            continue
        ids = first[v.id] + np.arange(b - a + 1)
        add(np.zeros(len(ids)), ids, START, np.zeros(len(ids)))
        add(ids[:-1], ids[1:], WAIT, np.ones(len(ids) - 1))
        add(ids, np.full(len(ids), sink), CARE, np.full(len(ids), v.duration))
    M = inst.travel_matrix
    for u in inst.visits:
        au, bu = windows[u.id]
        if au > bu:
            continue
        ts = np.arange(au, bu + 1)
        for v in inst.visits:
            if v.id == u.id or inst.same_family(u.id, v.id) or not (u.quals & v.quals):
                continue
            av, bv = windows[v.id]
            if av > bv:
                continue
            ell = np.maximum(ts + u.duration + M[u.id, v.id], av)
            ok = ell <= bv
            if not ok.any():
                continue
            add(first[u.id] + ts[ok] - au, first[v.id] + ell[ok] - av, CARE, ell[ok] - ts[ok])
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)
    tail, head, kind, cost = cat(tails, np.int64), cat(heads, np.int64), cat(kinds, np.int8), cat(costs, np.int64)
    order = np.lexsort((head, tail, kind))
    return TimeIndexedGraph(
        inst,
        windows,
        np.asarray(nv, dtype=np.int64),
        np.asarray(nt, dtype=np.int64),
        tail[order],
        head[order],
        kind[order],
        cost[order],
    )
