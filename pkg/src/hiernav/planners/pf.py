"""Potential-field local planner.

The attractive potential is ``0.5 * k_a * dist^2`` to the goal. Repulsion follows
``0.5 * k_r * (1/rho - 1/d)^2`` for every predicted agent and occupied cell
closer than ``d``. The robot steps along the negative gradient, clamped to
0.9 m/s, and faces its direction of travel.
"""
from __future__ import annotations

import math

import numpy as np

from .common import CostParams, Plan, RobotState
from .cost import predict_horizon

K_ATTRACT = 1.0
K_REPULSE = 2.0
V_MAX = 0.9
TRAP_EPS = 1e-6


def pf_force(robot_xy, goal, obstacles, d: float = 2.0, offset: float = 0.0,
             k_a: float = K_ATTRACT, k_r: float = K_REPULSE) -> np.ndarray:
    """Negative potential gradient at ``robot_xy``; ``obstacles`` are point positions."""
    r = np.asarray(robot_xy, dtype=float)
    to_goal = np.asarray(goal, dtype=float) - r
    force = k_a * to_goal
    pts = np.asarray(obstacles, dtype=float).reshape(-1, 2)
    if len(pts):
        away = r - pts
        centre = np.hypot(away[:, 0], away[:, 1])
        rho = np.maximum(centre - offset, 1e-3)
        near = (rho < d) & (centre > 0)
        if near.any():
            mag = k_r * (1.0 / rho[near] - 1.0 / d) / rho[near] ** 2
            force = force + np.sum(mag[:, None] * away[near] / centre[near, None], axis=0)
    return force


def pf_plan(root: RobotState, goal, tracks=(), occupancy=None, params: CostParams = CostParams(),
            v_max: float = V_MAX) -> Plan:
    """Roll the gradient descent forward ``horizon`` steps against predicted agents.

    A vanishing force (a local minimum) yields the stop plan: the robot freezes.
    """
    means, _ = predict_horizon(tracks, params.horizon, params.dt)
    cells = occupancy.centres() if occupancy is not None else np.zeros((0, 2))
    xy = root.xy.astype(float)
    heading = root.heading
    out_xy, out_h, out_v = [], [], []
    for k in range(1, params.horizon + 1):
        f = pf_force(xy, goal, means[k - 1], params.d, params.offset)
        if len(cells):
            f = f + _cell_force(xy, cells, params.d)
        mag = math.hypot(*f)
        if mag < TRAP_EPS:
            if k == 1:
                return Plan.stop(root, params.horizon, params.dt)
            speed = 0.0
        else:
            heading = math.atan2(f[1], f[0])
            speed = min(mag, v_max)
        xy = xy + speed * params.dt * np.array([math.cos(heading), math.sin(heading)])
        out_xy.append(xy.copy())
        out_h.append(heading)
        out_v.append(speed)
    t = root.t + params.dt * np.arange(1, params.horizon + 1)
    return Plan(t, np.array(out_xy), np.array(out_h), np.array(out_v))


def _cell_force(xy, cells, d, k_r: float = K_REPULSE):
    away = xy - cells
    rho = np.maximum(np.hypot(away[:, 0], away[:, 1]), 1e-3)
    near = rho < d
    if not near.any():
        return np.zeros(2)
    mag = k_r * (1.0 / rho[near] - 1.0 / d) / rho[near] ** 2
    return np.sum(mag[:, None] * away[near] / rho[near, None], axis=0)
