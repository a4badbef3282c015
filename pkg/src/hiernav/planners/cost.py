"""State cost and constant-velocity agent prediction."""
from __future__ import annotations

import math

import numpy as np

from .common import DT, CostParams

SIGMA0 = 0.1  # m, 1-sigma position uncertainty at the current step
SIGMA_RATE = 0.15  # m/s growth of sigma per axis


def evaluate_state(robot, goal, agents=(), params: CostParams = CostParams()) -> float:
    """Squared distance to the goal plus ``U / dist`` for every agent within ``d``.

    ``agents`` is a sequence of ``(position, U)``. Distances have ``params.offset``
    removed; at zero distance the weight is capped at ``alpha_max``.
    """
    r = np.asarray(robot, dtype=float)
    g = np.asarray(goal, dtype=float)
    cost = float(np.sum((r - g) ** 2))
    for pos, u in agents:
        dist = math.dist(r, np.asarray(pos, dtype=float)) - params.offset
        if dist > params.d:
            continue
        alpha = params.alpha_max if dist <= 0 else min(1.0 / dist, params.alpha_max)
        cost += u * alpha
    return cost


def track_arrays(tracks):
    """Positions and velocities from Track objects or a ``(positions, velocities)`` pair."""
    if isinstance(tracks, tuple) and len(tracks) == 2:
        pos, vel = tracks
        return np.asarray(pos, float).reshape(-1, 2), np.asarray(vel, float).reshape(-1, 2)
    tracks = list(tracks)
    if not tracks:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return (np.array([t.position for t in tracks], dtype=float),
            np.array([t.velocity for t in tracks], dtype=float))


def uncertainty(k, dt: float = DT, sigma0: float = SIGMA0, sigma_rate: float = SIGMA_RATE):
    """Area of the 1-sigma circle after ``k`` steps."""
    sigma = sigma0 + sigma_rate * np.asarray(k, dtype=float) * dt
    return math.pi * sigma ** 2


def cv_predict(tracks, k: int, dt: float = DT):
    """Mean positions and uncertainty ``U`` of every track ``k`` steps ahead.

    The robot's own plan has no influence here: the model ignores responses.
    """
    pos, vel = track_arrays(tracks)
    mean = pos + k * dt * vel
    return mean, np.full(len(pos), uncertainty(k, dt))


def predict_horizon(tracks, horizon: int, dt: float = DT):
    """Stacked predictions for steps 0..horizon: means ``(H+1, n, 2)``, ``U`` ``(H+1,)``."""
    pos, vel = track_arrays(tracks)
    k = np.arange(horizon + 1)
    means = pos[None] + (k * dt)[:, None, None] * vel[None]
    return means, uncertainty(k, dt)
