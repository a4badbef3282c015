"""Types shared by the local planners."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DT = 0.2


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    t: float = 0.0

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class CostParams:
    d: float = 2.0  # interaction radius (m)
    horizon: int = 8
    budget_iters: int = 2000
    alpha_max: float = 100.0
    offset: float = 0.0  # subtracted from centre distances (sum of body radii)
    zone_offset: float = 0.0  # agent radius as seen by the fail-safe zone
    k_leaves: int = 8
    c_ucb: float = 1.4
    widen: float = 1.0  # progressive widening coefficient
    dt: float = DT

    def __post_init__(self):
        if not self.d > 0 or self.horizon < 1:
            raise ValueError("need d > 0 and horizon >= 1")


@dataclass(frozen=True)
class ActionSpace:
    """Relative heading changes paired with speeds; row 0 is the stop action."""

    speeds: tuple[float, ...] = (0.3, 0.6, 0.9)
    turns_deg: tuple[float, ...] = tuple(range(-60, 61, 15))
    sector_deg: float = 90.0  # plans stay within this angle of the starting heading

    def __post_init__(self):
        if any(abs(t) > 90 for t in self.turns_deg):
            raise ValueError("per-step heading change must stay within 90 degrees")
        if any(s <= 0 for s in self.speeds):
            raise ValueError("speeds must be positive; stop is always included")

    def table(self) -> np.ndarray:
        rows = [(0.0, 0.0)]
        rows += [(math.radians(t), s) for s in self.speeds for t in self.turns_deg]
        return np.array(rows)


@dataclass
class Plan:
    """Timed poses for steps 1..n after the root; all arrays share the first axis."""

    t: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    value: float = -math.inf
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def is_stop(self) -> bool:
        return bool(np.all(self.speed == 0.0))

    @classmethod
    def stop(cls, root: RobotState, horizon: int = 8, dt: float = DT) -> "Plan":
        t = root.t + dt * np.arange(1, horizon + 1)
        return cls(t, np.tile(root.xy, (horizon, 1)), np.full(horizon, root.heading), np.zeros(horizon))
