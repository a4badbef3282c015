"""Shortest energy paths on the roadmap and the condensed goal graph."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class Digraph:
    """Minimal directed graph with parallel arc arrays; a Roadmap has the same shape."""

    n_vertices: int
    src: np.ndarray
    dst: np.ndarray
    cost: np.ndarray


@dataclass(frozen=True)
class Path:
    arcs: tuple[int, ...]
    vertices: tuple[int, ...]
    cost: float

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.cost)


class UnreachableGoalError(RuntimeError):
    def __init__(self, i: int, j: int):
        super().__init__(f"goal {j} is unreachable from goal {i}")
        self.pair = (i, j)


def _adjacency(graph):
    out = [[] for _ in range(graph.n_vertices)]
    for k, (a, b, c) in enumerate(zip(graph.src, graph.dst, graph.cost)):
        out[int(a)].append((float(c), int(b), k))
    return out


def dijkstra(graph, source: int, adjacency=None):
    """Single-source distances and predecessor arcs (``-1`` where unreached)."""
    adj = adjacency if adjacency is not None else _adjacency(graph)
    dist = np.full(graph.n_vertices, np.inf)
    pred = np.full(graph.n_vertices, -1, dtype=int)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for c, v, k in adj[u]:
            nd = d + c
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = k
                heapq.heappush(heap, (nd, v))
    return dist, pred


def _trace(graph, pred, source, target, dist) -> Path:
    if not math.isfinite(dist[target]):
        return Path((), (), math.inf)
    arcs = []
    v = target
    while v != source:
        k = pred[v]
        arcs.append(int(k))
        v = int(graph.src[k])
    arcs.reverse()
    verts = (source,) + tuple(int(graph.dst[k]) for k in arcs)
    cost = float(sum(graph.cost[k] for k in arcs))
    return Path(tuple(arcs), verts, cost)


def shortest_path(graph, i: int, j: int) -> Path:
    """Minimum-cost arc sequence from ``i`` to ``j``; an unreachable Path has infinite cost."""
    dist, pred = dijkstra(graph, i)
    return _trace(graph, pred, i, j, dist)


@dataclass
class GoalGraph:
    """Complete directed graph over goals; ``cost[a, b]`` is the energy of ``paths[a, b]``."""

    goal_ids: list[int]  # roadmap vertex per goal
    cost: np.ndarray
    paths: dict = field(default_factory=dict)
    precedence: tuple[int, int] | None = None

    @property
    def n(self) -> int:
        return len(self.goal_ids)


def goal_graph(roadmap, goal_ids=None) -> GoalGraph:
    """Run Dijkstra from every goal and keep the minimum-energy path to every other goal."""
    goal_ids = list(roadmap.goal_ids if goal_ids is None else goal_ids)
    n = len(goal_ids)
    cost = np.zeros((n, n))
    paths = {}
    adj = _adjacency(roadmap)
    for a, gi in enumerate(goal_ids):
        dist, pred = dijkstra(roadmap, gi, adj)
        for b, gj in enumerate(goal_ids):
            if a == b:
                continue
            p = _trace(roadmap, pred, gi, gj, dist)
            if not p.reachable:
                raise UnreachableGoalError(a, b)
            paths[a, b] = p
            cost[a, b] = p.cost
    return GoalGraph(goal_ids, cost, paths)


def apply_precedence(gg: GoalGraph, start: int, end: int) -> GoalGraph:
    """Force tours to begin at ``start`` and finish at ``end``.

    Arcs into ``start`` and out of ``end`` become infinite, except a zero-cost
    ``end -> start`` arc that closes the cycle. ``start == end`` leaves the graph as is.
    """
    if start == end or gg.precedence == (start, end):
        return gg
    cost = gg.cost.copy()
    paths = dict(gg.paths)
    for i in range(gg.n):
        if i != end and i != start:
            cost[i, start] = math.inf
            paths.pop((i, start), None)
        if i != start and i != end:
            cost[end, i] = math.inf
            paths.pop((end, i), None)
    cost[end, start] = 0.0
    paths[end, start] = Path((), (), 0.0)
    return replace(gg, cost=cost, paths=paths, precedence=(start, end))
