"""Hierarchical mode switching and reference tracking.

Three modes: ``long_term`` follows the global reference path, ``dynamic``
executes local plans and ``failsafe`` stops the robot. Fail-safe always wins;
dynamic mode latches for two seconds after its last trigger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .planners.common import RobotState
from .planners.failsafe import DYN_HALF_ANGLE, DYN_RADIUS, in_forward_zone

LONG_TERM = "long_term"
DYNAMIC = "dynamic"
FAILSAFE = "failsafe"
MODES = (LONG_TERM, DYNAMIC, FAILSAFE)

LATCH_S = 2.0
FRAMEWORK_RADIUS = 8.0
LOCAL_GOAL_AHEAD = 10.0
V_MAX = 1.0
W_MAX = 1.0
K_POS = 1.0
K_HEADING = 2.0
ACCEL = 1.0
_TIME_EPS = 1e-9


def dynamic_area_check(track_xy, cell_xy, pose, v: float, offset: float = 0.0,
                       framework_radius: float = FRAMEWORK_RADIUS) -> bool:
    """Whether the dynamic planner is needed.

    A confirmed track triggers only when it is inside the forward area *and*
    within ``framework_radius``; an occupied cell centre triggers on the area
    test alone.
    """
    if v < 0:
        raise ValueError("speed must be non-negative")
    tracks = np.asarray(track_xy, dtype=float).reshape(-1, 2)
    if len(tracks):
        zone = in_forward_zone(tracks, pose, DYN_RADIUS, DYN_RADIUS + 2 * v, DYN_HALF_ANGLE, offset)
        near = np.hypot(*(tracks - np.asarray(pose[:2])).T) <= framework_radius + offset
        if np.any(zone & near):
            return True
    cells = np.asarray(cell_xy, dtype=float).reshape(-1, 2)
    if len(cells):
        return bool(in_forward_zone(cells, pose, DYN_RADIUS, DYN_RADIUS + 2 * v, DYN_HALF_ANGLE, offset).any())
    return False


@dataclass(frozen=True)
class ModeState:
    mode: str = LONG_TERM
    latch_expiry: float = -math.inf
    replan: bool = False
    triggered: bool = False  # dynamic mode was entered on this tick


def select_mode(state: ModeState, fs: bool, dyn_needed: bool, t: float, latch_s: float = LATCH_S) -> ModeState:
    expiry = t + latch_s if dyn_needed else state.latch_expiry
    latched = t < expiry - _TIME_EPS
    if fs:
        return ModeState(FAILSAFE, expiry, False, False)
    if latched:
        return ModeState(DYNAMIC, expiry, True, state.mode != DYNAMIC)
    return ModeState(LONG_TERM, expiry, False, False)


class ReferencePath:
    """Arc-length parameterised polyline with per-goal arc lengths and accuracies."""

    def __init__(self, points, goal_s=None, accuracy=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("reference path needs at least one point")
        xy = pts[:, :2]
        keep = np.concatenate([[True], np.hypot(*np.diff(xy, axis=0).T) > 1e-9])
        self.points = pts[keep]
        self.xy = self.points[:, :2]
        seg = np.hypot(*np.diff(self.xy, axis=0).T) if len(self.xy) > 1 else np.zeros(0)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])
        self.goal_s = np.asarray([self.length] if goal_s is None else goal_s, dtype=float)
        self.accuracy = np.broadcast_to(
            np.asarray(1.0 if accuracy is None else accuracy, dtype=float), self.goal_s.shape).copy()

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s: float) -> np.ndarray:
        s = float(np.clip(s, 0.0, self.length))
        if len(self.xy) == 1:
            return self.xy[0].copy()
        return np.array([np.interp(s, self.s, self.xy[:, 0]), np.interp(s, self.s, self.xy[:, 1])])

    def tangent_at(self, s: float) -> np.ndarray:
        if len(self.xy) == 1:
            return np.zeros(2)
        k = int(np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2))
        d = self.xy[k + 1] - self.xy[k]
        return d / np.hypot(*d)

    def project(self, p, s_lo: float = 0.0, s_hi: float | None = None) -> tuple[float, float]:
        """Arc length of the closest path point in ``[s_lo, s_hi]`` and the distance to it."""
        p = np.asarray(p, dtype=float)[:2]
        s_hi = self.length if s_hi is None else s_hi
        if len(self.xy) == 1:
            return 0.0, float(np.hypot(*(p - self.xy[0])))
        a, b = self.xy[:-1], self.xy[1:]
        ab = b - a
        ll = np.einsum("ij,ij->i", ab, ab)
        u = np.clip(np.einsum("ij,ij->i", p - a, ab) / ll, 0.0, 1.0)
        s = np.clip(self.s[:-1] + u * np.sqrt(ll), s_lo, s_hi)
        foot = np.column_stack([np.interp(s, self.s, self.xy[:, 0]), np.interp(s, self.s, self.xy[:, 1])])
        dist = np.hypot(*(foot - p).T)
        k = int(np.argmin(dist))
        return float(s[k]), float(dist[k])

    def deviation(self, p) -> float:
        return self.project(p)[1]


def local_goal(reference: ReferencePath, robot_xy, s_lo: float = 0.0, s_goal: float | None = None,
               ahead: float = LOCAL_GOAL_AHEAD) -> np.ndarray:
    """Point ``ahead`` metres along the path past the robot's foot point, clamped at the goal."""
    s_goal = reference.length if s_goal is None else s_goal
    s_star, _ = reference.project(robot_xy, s_lo, s_goal)
    return reference.point_at(min(s_star + ahead, s_goal))


def slow_for_planning(robot: RobotState, direction=None, delay: float = 0.2, factor: float = 0.5,
                      path: ReferencePath | None = None, s_hint: float | None = None) -> RobotState:
    """State expected after slowing linearly to ``factor * v`` over ``delay`` seconds.

    Motion follows ``path`` from ``s_hint`` when given, else the straight line along
    ``direction`` (default: the heading).
    """
    if delay < 0:
        raise ValueError("delay must be non-negative")
    if robot.speed == 0 or delay == 0:
        return replace(robot, t=robot.t + delay)
    v_end = factor * robot.speed
    dist = 0.5 * (robot.speed + v_end) * delay
    if path is not None:
        s0 = path.project(robot.xy)[0] if s_hint is None else s_hint
        p = path.point_at(s0 + dist) + (robot.xy - path.point_at(s0))
        tan = path.tangent_at(s0 + dist)
        heading = math.atan2(tan[1], tan[0]) if np.any(tan) else robot.heading
    else:
        h = robot.heading if direction is None else direction
        p = robot.xy + dist * np.array([math.cos(h), math.sin(h)])
        heading = robot.heading
    return RobotState(float(p[0]), float(p[1]), heading, v_end, robot.t + delay)


@dataclass(frozen=True)
class VelocityCommand:
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


def _clamp_speed(v, v_max):
    n = math.hypot(*v)
    return v * (v_max / n) if n > v_max else v


def _turn(heading, direction, speed):
    if speed < 1e-6:
        return 0.0
    err = (direction - heading + math.pi) % (2 * math.pi) - math.pi
    return float(np.clip(K_HEADING * err, -W_MAX, W_MAX))


def pure_pursuit_step(robot: RobotState, target, dt: float, accuracy: float = 0.0,
                      v_max: float = V_MAX, s_lo: float = 0.0, s_goal: float | None = None) -> VelocityCommand:
    """Holonomic tracking command toward a point or along a ReferencePath.

    For a point the command is the P term on the position error. For a path the
    command feeds forward along the tangent at the robot's foot point and adds a
    P correction back onto the path, which keeps cross-track error small on
    curves; speed is limited so the robot can stop at the end of the path.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(target, ReferencePath):
        s_goal = target.length if s_goal is None else s_goal
        goal = target.point_at(s_goal)
        if math.hypot(*(goal - robot.xy)) < accuracy:
            return VelocityCommand()
        s_star, _ = target.project(robot.xy, s_lo, s_goal)
        remaining = s_goal - s_star
        speed = min(v_max, math.sqrt(2 * ACCEL * max(remaining, 0.0)))
        foot = target.point_at(s_star)
        v = speed * target.tangent_at(s_star) + K_POS * (foot - robot.xy)
        if remaining < 1e-9:
            v = K_POS * (goal - robot.xy)
    else:
        goal = np.asarray(target, dtype=float)[:2]
        err = goal - robot.xy
        if math.hypot(*err) < accuracy:
            return VelocityCommand()
        v = K_POS * err
    v = _clamp_speed(np.asarray(v, dtype=float), v_max)
    n = math.hypot(*v)
    omega = _turn(robot.heading, math.atan2(v[1], v[0]), n)
    return VelocityCommand(float(v[0]), float(v[1]), omega)


def plan_command(robot: RobotState, target_xy, dt: float, v_max: float = V_MAX) -> VelocityCommand:
    """Velocity that lands on the next plan pose after one tick."""
    v = _clamp_speed((np.asarray(target_xy, dtype=float) - robot.xy) / dt, v_max)
    omega = _turn(robot.heading, math.atan2(v[1], v[0]), math.hypot(*v))
    return VelocityCommand(float(v[0]), float(v[1]), omega)


def waypoint_arrival(robot_xy, goal, accuracy: float) -> bool:
    if not accuracy > 0:
        raise ValueError("accuracy must be positive")
    return math.dist(np.asarray(robot_xy, float)[:2], np.asarray(goal, float)[:2]) <= accuracy
