"""Ground-truth pedestrian crowd driven by ORCA reciprocal collision avoidance.

Each agent keeps the velocity closest to its preferred one that satisfies the
ORCA half-planes induced by its neighbours and by the robot. The robot is a
non-reciprocating disc: agents take full responsibility for avoiding it, and
its half-plane stays hard when a crowded agent has to relax the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

SUB_DT = 0.05
MAX_SPEED = 1.5
TAU = 2.0  # ORCA time horizon against agents and against the robot
ARRIVAL_TOL = 0.1
ROBOT_MARGIN = 0.01  # m agents keep beyond contact with the robot
DETOUR_MARGIN = 0.3  # m extra clearance of the path agents plan around the robot
DETOUR_RANGE = 3.5  # m within which agents plan around the robot
_EPS = 1e-5


@dataclass
class CrowdState:
    """Struct-of-arrays crowd; row ``k`` of every array is agent ``ids[k]``."""

    pos: np.ndarray
    vel: np.ndarray
    goal: np.ndarray
    pref_speed: np.ndarray
    radius: np.ndarray
    neighbour_dist: np.ndarray
    arena: tuple[float, float, float, float]
    time: float = 0.0
    ids: np.ndarray = field(default=None)
    policy: str = "opposite"

    def __post_init__(self):
        n = len(self.pos)
        if self.ids is None:
            self.ids = np.arange(n)
        if self.policy not in ("opposite", "stop"):
            raise ValueError(f"unknown goal policy {self.policy!r}")

    def __len__(self):
        return len(self.pos)

    def copy(self) -> "CrowdState":
        return CrowdState(self.pos.copy(), self.vel.copy(), self.goal.copy(), self.pref_speed.copy(),
                          self.radius.copy(), self.neighbour_dist.copy(), self.arena, self.time,
                          self.ids.copy(), self.policy)

    @classmethod
    def from_agents(cls, positions, goals, pref_speed, arena, radius=0.5, neighbour_dist=1.5,
                    policy="opposite") -> "CrowdState":
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = len(pos)
        return cls(
            pos=pos.copy(),
            vel=np.zeros((n, 2)),
            goal=np.asarray(goals, dtype=float).reshape(-1, 2).copy(),
            pref_speed=np.broadcast_to(np.asarray(pref_speed, dtype=float), (n,)).copy(),
            radius=np.broadcast_to(np.asarray(radius, dtype=float), (n,)).copy(),
            neighbour_dist=np.broadcast_to(np.asarray(neighbour_dist, dtype=float), (n,)).copy(),
            arena=tuple(arena),
            policy=policy,
        )


@dataclass(frozen=True)
class RobotDisc:
    pos: tuple[float, float]
    vel: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.5


# --- linear programs over ORCA half-planes (valid side is left of each directed line) ---

@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def _lp1(lp, ld, line_no, radius, opt, direction_opt, out):
    px, py = lp[line_no, 0], lp[line_no, 1]
    dx, dy = ld[line_no, 0], ld[line_no, 1]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, ld[i, 0], ld[i, 1])
        numer = _det(ld[i, 0], ld[i, 1], px - lp[i, 0], py - lp[i, 1])
        if abs(denom) <= _EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        t = t_right if opt[0] * dx + opt[1] * dy > 0.0 else t_left
    else:
        t = dx * (opt[0] - px) + dy * (opt[1] - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    out[0] = px + t * dx
    out[1] = py + t * dy
    return True


@njit(cache=True)
def _lp2(lp, ld, n_lines, radius, opt, direction_opt, out):
    """Closest point to ``opt`` inside the speed disc and all half-planes.

    With ``direction_opt`` the unit vector ``opt`` is a direction to go as far as
    possible along instead. Returns the number of lines satisfied; ``n_lines``
    means feasible.
    """
    sp = math.hypot(opt[0], opt[1])
    if direction_opt:
        out[0] = opt[0] * radius
        out[1] = opt[1] * radius
    elif sp > radius:
        out[0] = opt[0] / sp * radius
        out[1] = opt[1] / sp * radius
    else:
        out[0] = opt[0]
        out[1] = opt[1]
    for i in range(n_lines):
        if _det(ld[i, 0], ld[i, 1], lp[i, 0] - out[0], lp[i, 1] - out[1]) > 0.0:
            keep0, keep1 = out[0], out[1]
            if not _lp1(lp, ld, i, radius, opt, direction_opt, out):
                out[0], out[1] = keep0, keep1
                return i
    return n_lines


@njit(cache=True)
def _lp3(lp, ld, n_lines, n_hard, begin, radius, out):
    """Least-penetration velocity when ``_lp2`` is infeasible.

    The first ``n_hard`` lines stay hard; the others are relaxed uniformly so
    the worst violation among them is as small as possible.
    """
    dist = 0.0
    pp = np.empty((n_lines, 2))
    pd = np.empty((n_lines, 2))
    opt = np.empty(2)
    tmp = np.empty(2)
    for i in range(begin, n_lines):
        if _det(ld[i, 0], ld[i, 1], lp[i, 0] - out[0], lp[i, 1] - out[1]) <= dist:
            continue
        m = 0
        for j in range(n_hard):
            pp[m, 0], pp[m, 1] = lp[j, 0], lp[j, 1]
            pd[m, 0], pd[m, 1] = ld[j, 0], ld[j, 1]
            m += 1
        for j in range(n_hard, i):
            det = _det(ld[i, 0], ld[i, 1], ld[j, 0], ld[j, 1])
            if abs(det) <= _EPS:
                if ld[i, 0] * ld[j, 0] + ld[i, 1] * ld[j, 1] > 0.0:
                    continue
                pp[m, 0] = 0.5 * (lp[i, 0] + lp[j, 0])
                pp[m, 1] = 0.5 * (lp[i, 1] + lp[j, 1])
            else:
                s = _det(ld[j, 0], ld[j, 1], lp[i, 0] - lp[j, 0], lp[i, 1] - lp[j, 1]) / det
                pp[m, 0] = lp[i, 0] + s * ld[i, 0]
                pp[m, 1] = lp[i, 1] + s * ld[i, 1]
            dx, dy = ld[j, 0] - ld[i, 0], ld[j, 1] - ld[i, 1]
            n = math.hypot(dx, dy)
            pd[m, 0], pd[m, 1] = dx / n, dy / n
            m += 1
        tmp[0], tmp[1] = out[0], out[1]
        opt[0], opt[1] = -ld[i, 1], ld[i, 0]
        if _lp2(pp, pd, m, radius, opt, True, out) < m:
            out[0], out[1] = tmp[0], tmp[1]  # floating point trouble: keep the previous answer
        dist = _det(ld[i, 0], ld[i, 1], lp[i, 0] - out[0], lp[i, 1] - out[1])


@njit(cache=True)
def _orca_line(px, py, vx, vy, qx, qy, ux, uy, combined, inv_tau, inv_dt, share, lp, ld, k):
    """Half-plane for agent at p (velocity v) against a disc at q (velocity u)."""
    rx, ry = qx - px, qy - py
    rvx, rvy = vx - ux, vy - uy
    dist_sq = rx * rx + ry * ry
    comb_sq = combined * combined
    if dist_sq > comb_sq:
        wx, wy = rvx - inv_tau * rx, rvy - inv_tau * ry
        w_sq = wx * wx + wy * wy
        dot1 = wx * rx + wy * ry
        if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_sq:
            wl = math.sqrt(w_sq)
            uwx, uwy = wx / wl, wy / wl
            dirx, diry = uwy, -uwx
            bx = (combined * inv_tau - wl) * uwx
            by = (combined * inv_tau - wl) * uwy
        else:
            leg = math.sqrt(dist_sq - comb_sq)
            if _det(rx, ry, wx, wy) > 0.0:
                dirx = (rx * leg - ry * combined) / dist_sq
                diry = (rx * combined + ry * leg) / dist_sq
            else:
                dirx = -(rx * leg + ry * combined) / dist_sq
                diry = -(-rx * combined + ry * leg) / dist_sq
            dot2 = rvx * dirx + rvy * diry
            bx = dot2 * dirx - rvx
            by = dot2 * diry - rvy
    else:
        wx, wy = rvx - inv_dt * rx, rvy - inv_dt * ry
        wl = math.sqrt(wx * wx + wy * wy)
        if wl < 1e-12:
            wx, wy, wl = -rx, -ry, math.sqrt(dist_sq) + 1e-12
        uwx, uwy = wx / wl, wy / wl
        dirx, diry = uwy, -uwx
        bx = (combined * inv_dt - wl) * uwx
        by = (combined * inv_dt - wl) * uwy
    lp[k, 0] = vx + share * bx
    lp[k, 1] = vy + share * by
    ld[k, 0] = dirx
    ld[k, 1] = diry


@njit(cache=True)
def _orca_velocities(pos, vel, pref, radius, ndist, robot, robot_active, dt, max_speed, tau):
    n = pos.shape[0]
    new_vel = np.zeros((n, 2))
    if n == 0:
        return new_vel
    reach = 0.0
    for i in range(n):
        reach = max(reach, ndist[i] + 2.0 * radius[i])
    cell = max(reach, 0.5)
    xmin = pos[:, 0].min()
    ymin = pos[:, 1].min()
    nx = int((pos[:, 0].max() - xmin) / cell) + 1
    ny = int((pos[:, 1].max() - ymin) / cell) + 1
    cid = np.empty(n, np.int64)
    for i in range(n):
        cid[i] = int((pos[i, 0] - xmin) / cell) * ny + int((pos[i, 1] - ymin) / cell)
    order = np.argsort(cid, kind="mergesort")
    start = np.full(nx * ny + 1, -1, np.int64)
    for r in range(n - 1, -1, -1):
        start[cid[order[r]]] = r
    nxt_start = n
    for c in range(nx * ny, -1, -1):
        if start[c] == -1:
            start[c] = nxt_start
        else:
            nxt_start = start[c]

    inv_tau = 1.0 / tau
    inv_dt = 1.0 / dt
    cap = 64
    lp = np.empty((cap, 2))
    ld = np.empty((cap, 2))
    out = np.empty(2)
    opt = np.empty(2)
    for i in range(n):
        k = 0
        if robot_active:
            _orca_line(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1], robot[0], robot[1], robot[2], robot[3],
                       radius[i] + robot[4] + ROBOT_MARGIN, inv_tau, inv_dt, 1.0, lp, ld, k)
            k += 1
        ci = int((pos[i, 0] - xmin) / cell)
        cj = int((pos[i, 1] - ymin) / cell)
        for a in range(max(ci - 1, 0), min(ci + 2, nx)):
            for b in range(max(cj - 1, 0), min(cj + 2, ny)):
                c = a * ny + b
                for r in range(start[c], start[c + 1]):
                    j = order[r]
                    if j == i:
                        continue
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    lim = ndist[i] + radius[i] + radius[j]
                    if dx * dx + dy * dy >= lim * lim:
                        continue
                    if k == lp.shape[0]:
                        lp2 = np.empty((2 * k, 2))
                        ld2 = np.empty((2 * k, 2))
                        lp2[:k] = lp
                        ld2[:k] = ld
                        lp, ld = lp2, ld2
                    _orca_line(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1], pos[j, 0], pos[j, 1],
                               vel[j, 0], vel[j, 1], radius[i] + radius[j], inv_tau, inv_dt, 0.5, lp, ld, k)
                    k += 1
        opt[0] = pref[i, 0]
        opt[1] = pref[i, 1]
        fail = _lp2(lp, ld, k, max_speed, opt, False, out)
        if fail < k:
            _lp3(lp, ld, k, 1 if robot_active else 0, fail, max_speed, out)
        new_vel[i, 0] = out[0]
        new_vel[i, 1] = out[1]
    return new_vel


def preferred_velocities(crowd: CrowdState, dt: float, robot: RobotDisc | None = None) -> np.ndarray:
    """Straight at the goal at preferred speed, slowing so as not to overshoot it.

    An agent whose straight line to the goal is blocked by a nearby robot aims
    along the tangent past the robot on its own side instead, so agents walk
    around a stopped robot rather than pressing into it.
    """
    to_goal = crowd.goal - crowd.pos
    dist = np.hypot(to_goal[:, 0], to_goal[:, 1])
    speed = np.minimum(crowd.pref_speed, dist / dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dist[:, None] > 1e-12, to_goal / dist[:, None], 0.0)
    if robot is not None and len(crowd):
        rel = np.asarray(robot.pos, dtype=float) - crowd.pos
        d = np.hypot(rel[:, 0], rel[:, 1])
        clear = crowd.radius + robot.radius + DETOUR_MARGIN
        along = np.einsum("ij,ij->i", rel, unit)
        perp = unit[:, 0] * rel[:, 1] - unit[:, 1] * rel[:, 0]
        blocked = (d < DETOUR_RANGE) & (along > 0) & (along < dist + clear) & (np.abs(perp) < clear)
        if blocked.any():
            side = np.where(perp[blocked] >= 0, 1.0, -1.0)
            ang = np.arctan2(rel[blocked, 1], rel[blocked, 0])
            ang -= side * np.arcsin(np.minimum(1.0, clear[blocked] / np.maximum(d[blocked], 1e-9)))
            unit[blocked] = np.column_stack([np.cos(ang), np.sin(ang)])
            speed[blocked] = crowd.pref_speed[blocked]
    return unit * speed[:, None]


def opposite_goal(pos, arena, rng) -> np.ndarray:
    """Uniform point in the half of the arena opposite ``pos`` along its dominant axis."""
    xmin, ymin, xmax, ymax = arena
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    dx, dy = (pos[0] - cx) / (xmax - xmin), (pos[1] - cy) / (ymax - ymin)
    if abs(dx) >= abs(dy):
        xs = (xmin, cx) if dx > 0 else (cx, xmax)
        return np.array([rng.uniform(*xs), rng.uniform(ymin, ymax)])
    ys = (ymin, cy) if dy > 0 else (cy, ymax)
    return np.array([rng.uniform(xmin, xmax), rng.uniform(*ys)])


def step(crowd: CrowdState, robot: RobotDisc | None, dt: float = SUB_DT, rng=None) -> CrowdState:
    """Advance the crowd one sub-step in place and return it."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    robot_arr = np.zeros(5)
    if robot is not None:
        robot_arr[:] = (*robot.pos, *robot.vel, robot.radius)
    pref = preferred_velocities(crowd, dt, robot)
    crowd.vel = _orca_velocities(crowd.pos, crowd.vel, pref, crowd.radius, crowd.neighbour_dist,
                                 robot_arr, robot is not None, dt, MAX_SPEED, TAU)
    crowd.pos = crowd.pos + crowd.vel * dt
    crowd.time += dt
    arrived = np.hypot(*(crowd.goal - crowd.pos).T) < ARRIVAL_TOL
    if robot is not None and len(crowd):
        # a goal under the robot is as reached as it will get once the agent is beside it
        clear = crowd.radius + robot.radius + DETOUR_MARGIN
        rp = np.asarray(robot.pos, dtype=float)
        covered = np.hypot(*(crowd.goal - rp).T) < clear
        arrived |= covered & (np.hypot(*(crowd.pos - rp).T) < clear + ARRIVAL_TOL)
    if crowd.policy == "opposite" and arrived.any():
        if rng is None:
            raise ValueError("the 'opposite' goal policy needs an rng")
        for k in np.nonzero(arrived)[0]:
            crowd.goal[k] = opposite_goal(crowd.pos[k], crowd.arena, rng)
    return crowd


def spawn_density(area_bounds, density: float, rng, keep_out=(), radius: float = 0.5,
                  neighbour_dist: float = 1.5, policy: str = "opposite",
                  max_tries: int = 200) -> CrowdState:
    """Place ``floor(area / density)`` non-overlapping agents uniformly in the arena.

    ``keep_out`` is a sequence of ``(x, y, r)`` discs no agent centre may be closer to
    than ``r + radius`` (for instance the robot's start pose).
    """
    if not density > 0:
        raise ValueError("density must be positive (m^2 per agent)")
    xmin, ymin, xmax, ymax = area_bounds
    n = int(math.floor((xmax - xmin) * (ymax - ymin) / density + 1e-9))
    pos = np.empty((n, 2))
    keep = np.asarray(keep_out, dtype=float).reshape(-1, 3)
    for k in range(n):
        for _ in range(max_tries):
            p = np.array([rng.uniform(xmin + radius, xmax - radius), rng.uniform(ymin + radius, ymax - radius)])
            if k and np.min(np.hypot(*(pos[:k] - p).T)) < 2 * radius:
                continue
            if len(keep) and np.any(np.hypot(*(keep[:, :2] - p).T) < keep[:, 2] + radius):
                continue
            pos[k] = p
            break
        else:
            raise RuntimeError(f"could not place agent {k} of {n} without overlap")
    speed = rng.uniform(0.1, MAX_SPEED, n)
    goals = np.array([opposite_goal(p, area_bounds, rng) for p in pos]).reshape(-1, 2)
    return CrowdState.from_agents(pos, goals, speed, area_bounds, radius, neighbour_dist, policy)
