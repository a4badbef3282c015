"""Anytime Monte Carlo tree search with single-step simulation.

Every iteration descends the tree ``K`` times by UCB1 on negated cost, expands
one untried valid action at each selected node (cheapest one-step cost first),
scores the new child with a single prediction step and backs the scores up.
Progressive widening caps a node's children at ``widen * sqrt(visits)`` so the
search can reach the full horizon instead of filling the first levels; a node
whose children are all fully expanded may widen past the cap. The best plan is the path to
the best-scoring node found so far, so its value never decreases as the search
continues.

A child is valid when its swept disc avoids occupied cells and the map edge,
and when the robot's own motion does not bring a predicted agent inside ``d``.
An agent that is already inside ``d`` may be approached as long as it stays
out of the fail-safe zone of the new pose, so the robot can work its way
through a crowd that has closed in around it. The stop action is always valid.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .common import ActionSpace, CostParams, Plan, RobotState
from .cost import predict_horizon
from .failsafe import FS_HALF_ANGLE, FS_RADIUS

SWEEP_STEP = 0.1
ZONE_MARGIN = 0.25  # m added to the fail-safe zone to absorb prediction error


@njit(cache=True)
def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@njit(cache=True)
def _cost(x, y, gx, gy, amean, au, k, d, offset, alpha_max):
    c = (x - gx) ** 2 + (y - gy) ** 2
    for i in range(amean.shape[1]):
        dist = math.hypot(amean[k, i, 0] - x, amean[k, i, 1] - y) - offset
        if dist > d:
            continue
        if dist <= 0.0:
            alpha = alpha_max
        else:
            alpha = min(1.0 / dist, alpha_max)
        c += au[k] * alpha
    return c


@njit(cache=True)
def _occupied(x, y, occ, ox, oy, res):
    col = int(math.floor((x - ox) / res))
    row = int(math.floor((y - oy) / res))
    if row < 0 or col < 0 or row >= occ.shape[0] or col >= occ.shape[1]:
        return False
    return occ[row, col]


@njit(cache=True)
def _swept_free(x0, y0, x1, y1, occ, ox, oy, res, bounds):
    if x1 < bounds[0] or x1 > bounds[2] or y1 < bounds[1] or y1 > bounds[3]:
        return False
    length = math.hypot(x1 - x0, y1 - y0)
    n = int(math.ceil(length / SWEEP_STEP))
    for s in range(1, n + 1):
        f = s / n
        if _occupied(x0 + f * (x1 - x0), y0 + f * (y1 - y0), occ, ox, oy, res):
            return False
    return True


@njit(cache=True)
def _keeps_clear(px, py, x, y, h, v, amean, k, d, offset, zone_r):
    ch, sh = math.cos(h), math.sin(h)
    for i in range(amean.shape[1]):
        ax, ay = amean[k, i, 0] - x, amean[k, i, 1] - y
        centre = math.hypot(ax, ay)
        now = centre - offset
        if now >= d:
            continue
        stay = math.hypot(amean[k, i, 0] - px, amean[k, i, 1] - py) - offset
        if now >= stay:
            continue
        before = math.hypot(amean[k - 1, i, 0] - px, amean[k - 1, i, 1] - py) - offset
        if before >= d:
            return False
        # already inside d: fine unless the pose would trip the fail-safe
        fwd = ax * ch + ay * sh
        if fwd >= 0.0 and centre <= zone_r:
            return False
        if fwd > 0.0 and abs(math.atan2(ay * ch - ax * sh, fwd)) <= FS_HALF_ANGLE \
                and centre <= zone_r + v:
            return False
    return True


@njit(cache=True)
def _order_actions(x, y, h, k, root_h, actions, gx, gy, amean, au, dt, d, offset, alpha_max, sector):
    """Random permutation stably re-sorted by one-step cost; out-of-sector actions last."""
    m = actions.shape[0]
    perm = np.random.permutation(m)
    key = np.empty(m)
    for q in range(m):
        a = perm[q]
        hh = h + actions[a, 0]
        if abs(_wrap(hh - root_h)) > sector + 1e-9:
            key[q] = np.inf
            continue
        xx = x + actions[a, 1] * dt * math.cos(hh)
        yy = y + actions[a, 1] * dt * math.sin(hh)
        key[q] = _cost(xx, yy, gx, gy, amean, au, min(k, amean.shape[0] - 1), d, offset, alpha_max)
    return perm[np.argsort(key, kind="mergesort")]


@njit(cache=True)
def _settle(node, dead, tried, first, sibling, parent, depth, horizon, m):
    """Mark ``node`` and its ancestors dead while their subtrees are fully expanded."""
    while node != -1 and not dead[node]:
        if depth[node] < horizon and tried[node] < m:
            return
        ch = first[node]
        while ch != -1:
            if not dead[ch]:
                return
            ch = sibling[ch]
        dead[node] = True
        node = parent[node]


@njit(cache=True)
def _search(root, goal, amean, au, occ, occ_meta, bounds, actions, k_leaves, c_ucb, budget,
            horizon, dt, d, offset, alpha_max, sector, widen, zone_r, seed):
    np.random.seed(seed)
    m = actions.shape[0]
    cap = budget * k_leaves + 1
    nx = np.empty(cap)
    ny = np.empty(cap)
    nh = np.empty(cap)
    nv = np.empty(cap)
    depth = np.zeros(cap, np.int64)
    parent = np.full(cap, -1, np.int64)
    first = np.full(cap, -1, np.int64)
    sibling = np.full(cap, -1, np.int64)
    tried = np.zeros(cap, np.int64)
    n_child = np.zeros(cap, np.int64)
    visits = np.zeros(cap, np.int64)
    vsum = np.zeros(cap)
    reward = np.zeros(cap)
    perm = np.empty((cap, m), np.int64)
    dead = np.zeros(cap, np.bool_)  # subtree has nothing left to expand

    gx, gy = goal[0], goal[1]
    ox, oy, res = occ_meta[0], occ_meta[1], occ_meta[2]
    nx[0], ny[0], nh[0], nv[0] = root[0], root[1], root[2], root[3]
    norm = max((root[0] - gx) ** 2 + (root[1] - gy) ** 2, 1e-6)
    reward[0] = -_cost(root[0], root[1], gx, gy, amean, au, 0, d, offset, alpha_max) / norm
    visits[0] = 1
    vsum[0] = reward[0]
    perm[0] = _order_actions(root[0], root[1], root[2], 1, root[2], actions, gx, gy, amean, au,
                             dt, d, offset, alpha_max, sector)
    n_nodes = 1
    best = -1
    best_val = -np.inf
    fresh = np.empty(k_leaves, np.int64)
    iters = 0
    for it in range(budget):
        n_new = 0
        for _ in range(k_leaves):
            node = 0
            while True:
                open_ = depth[node] < horizon and tried[node] < m
                if open_ and n_child[node] < max(1.0, widen * math.sqrt(visits[node])):
                    break
                pick = -1
                pick_score = -np.inf
                log_n = math.log(visits[node] + 1.0)
                ch = first[node]
                while ch != -1:
                    if not dead[ch]:
                        score = vsum[ch] / visits[ch] + c_ucb * math.sqrt(log_n / visits[ch])
                        if score > pick_score:
                            pick_score = score
                            pick = ch
                    ch = sibling[ch]
                if pick == -1:
                    if not open_:
                        node = -1
                    break
                node = pick
            if node == -1:
                continue
            while tried[node] < m:
                a = perm[node, tried[node]]
                tried[node] += 1
                dh, v = actions[a, 0], actions[a, 1]
                h = nh[node] + dh
                if abs(_wrap(h - root[2])) > sector + 1e-9:
                    continue
                x = nx[node] + v * dt * math.cos(h)
                y = ny[node] + v * dt * math.sin(h)
                k = depth[node] + 1
                if v > 0.0:
                    if not _swept_free(nx[node], ny[node], x, y, occ, ox, oy, res, bounds):
                        continue
                    if not _keeps_clear(nx[node], ny[node], x, y, h, v, amean, k, d, offset, zone_r):
                        continue
                c = n_nodes
                n_nodes += 1
                nx[c], ny[c], nh[c], nv[c] = x, y, h, v
                depth[c] = k
                parent[c] = node
                sibling[c] = first[node]
                first[node] = c
                n_child[node] += 1
                perm[c] = _order_actions(x, y, h, k + 1, root[2], actions, gx, gy, amean, au,
                                         dt, d, offset, alpha_max, sector)
                reward[c] = -_cost(x, y, gx, gy, amean, au, k, d, offset, alpha_max) / norm
                visits[c] = 1
                vsum[c] = reward[c]
                fresh[n_new] = c
                n_new += 1
                if k >= horizon:
                    dead[c] = True
                break
            _settle(node, dead, tried, first, sibling, parent, depth, horizon, m)
        iters = it + 1
        if dead[0]:
            break
        for q in range(n_new):
            c = fresh[q]
            p = parent[c]
            while p != -1:
                visits[p] += 1
                vsum[p] += reward[c]
                p = parent[p]
            if reward[c] > best_val or (reward[c] == best_val and depth[c] > depth[best]):
                best_val = reward[c]
                best = c
    if best == -1:
        return np.zeros((0, 4)), best_val, iters, n_nodes
    n = depth[best]
    path = np.empty((n, 4))
    c = best
    while c > 0:
        path[depth[c] - 1, 0] = nx[c]
        path[depth[c] - 1, 1] = ny[c]
        path[depth[c] - 1, 2] = nh[c]
        path[depth[c] - 1, 3] = nv[c]
        c = parent[c]
    return path, best_val, iters, n_nodes


_NO_GRID = (np.zeros((1, 1), dtype=np.bool_), np.array([0.0, 0.0, 1.0]))
_NO_BOUNDS = np.array([-np.inf, -np.inf, np.inf, np.inf])


def mcts_plan(root: RobotState, goal, tracks=(), occupancy=None, actions: ActionSpace = ActionSpace(),
              params: CostParams = CostParams(), seed: int = 0, bounds=None) -> Plan:
    """Search for a collision-free ``horizon``-step plan toward ``goal``.

    ``tracks`` are Track objects or a ``(positions, velocities)`` pair and are
    predicted with the constant-velocity model. Returns the stop plan when no
    action leaves the root.
    """
    amean, au = predict_horizon(tracks, params.horizon, params.dt)
    if occupancy is None:
        occ, meta = _NO_GRID
    else:
        occ = np.ascontiguousarray(occupancy.occupied, dtype=np.bool_)
        meta = np.array([occupancy.origin[0], occupancy.origin[1], occupancy.resolution])
    bnd = _NO_BOUNDS if bounds is None else np.asarray(bounds, dtype=float)
    path, value, iters, n_nodes = _search(
        np.array([root.x, root.y, root.heading, root.speed]), np.asarray(goal, dtype=float),
        np.ascontiguousarray(amean), np.asarray(au, dtype=float), occ, meta, bnd, actions.table(),
        params.k_leaves, params.c_ucb, params.budget_iters, params.horizon, params.dt, params.d,
        params.offset, params.alpha_max, math.radians(actions.sector_deg), params.widen,
        FS_RADIUS + params.zone_offset + ZONE_MARGIN, seed)
    if len(path) == 0 or np.all(path[:, 3] == 0.0):
        plan = Plan.stop(root, params.horizon, params.dt)
        plan.value, plan.iterations = value, iters
        return plan
    t = root.t + params.dt * np.arange(1, len(path) + 1)
    return Plan(t, path[:, :2].copy(), path[:, 2].copy(), path[:, 3].copy(), value, iters,
                {"nodes": int(n_nodes)})
