"""Cost-of-motion energy model and the J/m-toward-goal metric."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAIN_FLOOR = 0.01  # m per window


@dataclass(frozen=True)
class EnergyParams:
    mass_kg: float = 220.6
    mu: float = 0.0767
    g: float = 9.81
    static_w: float = 203.0

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise ValueError("mass must be positive")
        if self.mu < 0 or self.static_w < 0:
            raise ValueError("mu and static draw must be non-negative")


def instantaneous_power(v: float, slope: float, params: EnergyParams = EnergyParams()) -> float:
    """Power draw (W) at speed ``v`` on terrain inclined ``slope`` rad along the motion.

    The motive term is clamped at zero on steep descents: no regeneration.
    """
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    resist = math.sin(slope) + params.mu * math.cos(slope)
    return max(resist, 0.0) * params.mass_kg * params.g * v + params.static_w


def power_array(v, slope, params: EnergyParams = EnergyParams()) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    slope = np.asarray(slope, dtype=float)
    if (v < 0).any():
        raise ValueError("speed must be non-negative")
    resist = np.sin(slope) + params.mu * np.cos(slope)
    return np.maximum(resist, 0.0) * params.mass_kg * params.g * v + params.static_w


def edge_energy(polyline, speed: float, params: EnergyParams = EnergyParams()) -> float:
    """Energy (J) to drive a 3D polyline at constant ``speed``."""
    pts = np.asarray(polyline, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return 0.0
    if not speed > 0:
        raise ValueError("speed must be positive")
    d = np.diff(pts, axis=0)
    horiz = np.hypot(d[:, 0], d[:, 1])
    length = np.sqrt(horiz ** 2 + d[:, 2] ** 2)
    keep = length > 0
    slope = np.arctan2(d[keep, 2], horiz[keep])
    p = power_array(np.full(slope.shape, speed), slope, params)
    return float(np.sum(p * length[keep] / speed))


@dataclass(frozen=True)
class Window:
    start: float
    end: float
    energy: float  # J
    gain: float  # m of Euclidean progress toward the active goal
    bucket: int  # max agents detected within 8 m, capped at 5

    @property
    def capped(self) -> bool:
        return self.gain < GAIN_FLOOR

    @property
    def joules_per_metre(self) -> float:
        return self.energy / max(self.gain, GAIN_FLOOR)

    @property
    def velocity(self) -> float:
        return self.gain / (self.end - self.start)


def windows(log, window_s: float = 1.0, goal=None) -> list[Window]:
    """Split a run log into fixed windows of energy and progress.

    Record 0 is the initial state; record k covers the interval (t[k-1], t[k]].
    ``goal`` overrides the per-record active goal.
    """
    t = np.asarray(log.t, dtype=float)
    n = len(t)
    if n < 2:
        return []
    xy = np.column_stack([log.x, log.y])
    if goal is None:
        gxy = np.column_stack([log.goal_x, log.goal_y])
    else:
        gxy = np.broadcast_to(np.asarray(goal, dtype=float), xy.shape)
    dist_before = np.linalg.norm(xy[:-1] - gxy[1:], axis=1)
    dist_after = np.linalg.norm(xy[1:] - gxy[1:], axis=1)
    gain = np.concatenate([[0.0], dist_before - dist_after])
    energy = np.asarray(log.energy, dtype=float)
    detected = np.asarray(log.n_detected, dtype=int)
    dt = float(np.median(np.diff(t)))
    per = max(1, int(round(window_s / dt)))
    out = []
    for lo in range(1, n, per):
        hi = min(lo + per, n)
        out.append(Window(
            start=float(t[lo - 1]),
            end=float(t[hi - 1]),
            energy=float(energy[lo:hi].sum()),
            gain=float(gain[lo:hi].sum()),
            bucket=int(min(detected[lo - 1:hi].max(), 5)),
        ))
    return out


def energy_per_metre_gained(log, goal=None, window_s: float = 1.0) -> dict[int, list[float]]:
    """J per metre of progress toward the goal for each 1 s window, keyed by density bucket.

    Windows whose progress falls below ``GAIN_FLOOR`` are divided by the floor.
    """
    series: dict[int, list[float]] = {}
    for w in windows(log, window_s, goal):
        series.setdefault(w.bucket, []).append(w.joules_per_metre)
    return series
