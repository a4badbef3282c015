"""Forward safety zones: a semicircle plus a speed-dependent sector."""
from __future__ import annotations

import math

import numpy as np

FS_RADIUS = 2.0
FS_HALF_ANGLE = math.radians(45.0)
DYN_RADIUS = 4.0
DYN_HALF_ANGLE = math.radians(67.5)


def in_forward_zone(points, pose, radius: float, sector_radius: float, half_angle: float,
                    offset: float = 0.0) -> np.ndarray:
    """Mask of points inside the forward semicircle of ``radius`` or the sector.

    ``pose`` is ``(x, y, heading)``. ``offset`` extends both radii, e.g. by the
    robot's body radius when distances are measured from its surface.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not len(pts):
        return np.zeros(0, bool)
    x, y, h = pose[:3]
    d = pts - (x, y)
    fwd = d[:, 0] * math.cos(h) + d[:, 1] * math.sin(h)
    dist = np.hypot(d[:, 0], d[:, 1])
    bearing = np.abs(np.arctan2(d[:, 1] * math.cos(h) - d[:, 0] * math.sin(h), fwd))
    semi = (fwd >= -1e-12) & (dist <= radius + offset)
    sector = (bearing <= half_angle + 1e-12) & (dist <= sector_radius + offset)
    return semi | sector


def fs_check(points, pose, v: float, offset: float = 0.0) -> bool:
    """True when any point lies in the fail-safe zone for speed ``v``."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    return bool(in_forward_zone(points, pose, FS_RADIUS, FS_RADIUS + v, FS_HALF_ANGLE, offset).any())
