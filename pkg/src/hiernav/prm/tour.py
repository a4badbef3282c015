"""Precedence-constrained asymmetric TSP over the goal graph."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import GoalGraph, apply_precedence

EXACT_LIMIT = 12


class NoTourError(RuntimeError):
    """No finite-cost ordering visits every goal."""


@dataclass
class Tour:
    order: list[int]  # goal indices in visiting order
    energy: float  # J, sum of traversed leg costs
    polyline: np.ndarray | None = None  # (n, 3) reference path
    goal_arclength: np.ndarray | None = None  # planar arc length at each goal in ``order``


def cycle_cost(cost: np.ndarray, order) -> float:
    return float(sum(cost[a, b] for a, b in zip(order, list(order[1:]) + [order[0]])))


def held_karp(cost: np.ndarray, start: int = 0) -> tuple[list[int], float]:
    """Exact minimum Hamiltonian cycle through ``start`` by dynamic programming over subsets."""
    n = len(cost)
    if n == 1:
        return [start], 0.0
    others = [i for i in range(n) if i != start]
    m = len(others)
    c = cost[np.ix_(others, others)]
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=int)
    bits = 1 << np.arange(m)
    dp[bits, np.arange(m)] = cost[start, others]
    for mask in range(1, full):
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        cand = row[:, None] + c  # (from k, to j)
        best_k = np.argmin(cand, axis=0)
        best = cand[best_k, np.arange(m)]
        js = np.nonzero((mask & bits) == 0)[0]
        nxt = mask | bits[js]
        better = best[js] < dp[nxt, js]
        dp[nxt[better], js[better]] = best[js][better]
        parent[nxt[better], js[better]] = best_k[js][better]
    last = dp[full - 1] + cost[others, start]
    j = int(np.argmin(last))
    total = float(last[j])
    if not math.isfinite(total):
        return [], math.inf
    seq = []
    mask = full - 1
    while j >= 0:
        seq.append(others[j])
        pj = parent[mask, j]
        mask ^= 1 << j
        j = int(pj)
    return [start] + seq[::-1], total


def nearest_neighbour_2opt(cost: np.ndarray, start: int = 0) -> tuple[list[int], float]:
    """Greedy construction then segment-reversal improvement until no move helps."""
    n = len(cost)
    order = [start]
    left = set(range(n)) - {start}
    while left:
        here = order[-1]
        nxt = min(sorted(left), key=lambda j: cost[here, j])
        order.append(nxt)
        left.remove(nxt)
    best = cycle_cost(cost, order)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for k in range(i + 1, n):
                cand = order[:i] + order[i:k + 1][::-1] + order[k + 1:]
                c = cycle_cost(cost, cand)
                if c < best - 1e-12:
                    order, best, improved = cand, c, True
    return order, best


def solve_tour(gg: GoalGraph, start: int, end: int, roadmap=None, world=None) -> Tour:
    """Cheapest ordering from ``start`` to ``end`` visiting every goal once.

    When ``start == end`` the tour is a closed cycle that returns to ``start``.
    Passing ``roadmap`` and ``world`` also assembles the 3D reference polyline.
    """
    gg = apply_precedence(gg, start, end)
    solver = held_karp if gg.n <= EXACT_LIMIT else nearest_neighbour_2opt
    order, total = solver(gg.cost, start)
    if not order or not math.isfinite(total):
        raise NoTourError("no finite-cost tour visits every goal")
    legs = list(zip(order, order[1:]))
    if start == end and gg.n > 1:
        legs.append((order[-1], start))
    energy = float(sum(gg.cost[a, b] for a, b in legs))
    tour = Tour(order=order, energy=energy)
    if roadmap is not None and world is not None:
        tour.polyline, tour.goal_arclength = _assemble(gg, legs, order, roadmap, world)
    return tour


def _assemble(gg, legs, order, roadmap, world):
    start_v = roadmap.vertices[gg.goal_ids[order[0]]]
    pts = [np.array([[start_v.x, start_v.y, start_v.z]])]
    marks = [0.0]
    run = 0.0
    for a, b in legs:
        for k in gg.paths[a, b].arcs:
            poly = roadmap.arc_polyline(k, world)[1:]
            run += float(np.sum(np.hypot(*np.diff(np.vstack([pts[-1][-1:], poly])[:, :2], axis=0).T)))
            pts.append(poly)
        marks.append(run)
    return np.vstack(pts), np.array(marks[:len(order)])
