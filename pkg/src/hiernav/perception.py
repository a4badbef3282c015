"""Simulated perception: zone-dependent detection, multi-target tracking and occupancy.

Detection probability depends on where an agent sits relative to the robot:
front (|bearing| <= 45 deg), sides (45-135 deg) or rear, crossed with range bands
0-4 m, 4-8 m and 8 m to the sensing limit. Tracks are constant-velocity Kalman
filters matched to detections by minimum total distance.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

SENSING_RANGE = 15.0
BAND_EDGES = (4.0, 8.0)
QUADRANTS = ("front", "sides", "rear")
BANDS = ("0-4", "4-8", "8+")
TICK = 0.2
HISTORY = 12

# Measured recall and precision of the real pipeline; rows front/sides/rear, columns 0-4/4-8/8+ m.
TABLE1_RECALL = np.array([
    [0.850, 0.720, 0.057],
    [0.642, 0.510, 0.033],
    [0.097, 0.168, 0.000],
])
TABLE1_PRECISION = np.array([
    [1.000, 1.000, 0.770],
    [0.974, 0.982, 0.720],
    [0.031, 0.424, np.nan],  # no detections at all behind the robot beyond 8 m
])


@dataclass(frozen=True)
class DetectionModel:
    recall: np.ndarray
    precision: np.ndarray
    sigma_pos: float = 0.1
    max_range: float = SENSING_RANGE
    mode: str = "table1"

    def __post_init__(self):
        r = np.asarray(self.recall, dtype=float)
        p = np.asarray(self.precision, dtype=float)
        if r.shape != (3, 3) or p.shape != (3, 3):
            raise ValueError("recall and precision must be 3x3 (quadrant x band)")
        if np.any((r < 0) | (r > 1)) or np.any((p[~np.isnan(p)] <= 0) | (p[~np.isnan(p)] > 1)):
            raise ValueError("recall must lie in [0, 1] and precision in (0, 1]")
        object.__setattr__(self, "recall", r)
        object.__setattr__(self, "precision", p)

    @classmethod
    def ideal(cls, sigma_pos: float = 0.1, max_range: float = SENSING_RANGE) -> "DetectionModel":
        return cls(np.ones((3, 3)), np.ones((3, 3)), sigma_pos, max_range, "ideal")

    @classmethod
    def preset(cls, name: str, **kw) -> "DetectionModel":
        if name == "swagbot-table1":
            return cls(TABLE1_RECALL, TABLE1_PRECISION, mode="table1", **kw)
        if name == "ideal":
            return cls.ideal(**kw)
        raise ValueError(f"unknown detection preset {name!r}")

    @property
    def fp_rate(self) -> np.ndarray:
        """Expected false positives per true agent in each zone."""
        p = np.nan_to_num(self.precision, nan=1.0)
        return self.recall * (1.0 - p) / p


def zone_of(points, robot_pose):
    """(quadrant, band, range) of world points relative to an (x, y, psi) pose."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y, psi = robot_pose[:3]
    d = pts - (x, y)
    rng = np.hypot(d[:, 0], d[:, 1])
    bearing = np.abs(np.arctan2(d[:, 1], d[:, 0]) - psi)
    bearing = np.abs((bearing + math.pi) % (2 * math.pi) - math.pi)
    quad = np.where(bearing <= math.pi / 4, 0, np.where(bearing <= 3 * math.pi / 4, 1, 2))
    band = np.searchsorted(BAND_EDGES, rng, side="right")
    return quad, band, rng


@dataclass
class Detections:
    xy: np.ndarray
    source: np.ndarray  # index of the true agent, -1 for false positives

    def __len__(self):
        return len(self.xy)


def _sample_zone(quad, band, n, robot_pose, max_range, rng):
    x, y, psi = robot_pose[:3]
    r0 = (0.0, *BAND_EDGES)[band]
    r1 = (*BAND_EDGES, max_range)[band]
    r = np.sqrt(rng.uniform(r0 ** 2, r1 ** 2, n))
    if quad == 0:
        a = rng.uniform(-math.pi / 4, math.pi / 4, n)
    elif quad == 1:
        a = rng.uniform(math.pi / 4, 3 * math.pi / 4, n) * rng.choice([-1.0, 1.0], n)
    else:
        a = math.pi + rng.uniform(-math.pi / 4, math.pi / 4, n)
    return np.column_stack([x + r * np.cos(psi + a), y + r * np.sin(psi + a)])


def sense(agent_xy, robot_pose, model: DetectionModel, rng: np.random.Generator) -> Detections:
    """One frame of detections of the agents at ``agent_xy`` seen from ``robot_pose``.

    False positives are Poisson distributed per zone so that their expected
    count matches the zone's precision; the mean exceeds one in some zones.
    """
    pts = np.asarray(agent_xy, dtype=float).reshape(-1, 2)
    quad, band, dist = zone_of(pts, robot_pose)
    visible = dist <= model.max_range
    hit = visible & (rng.random(len(pts)) < model.recall[quad, band])
    idx = np.nonzero(hit)[0]
    xy = pts[idx] + rng.normal(0.0, model.sigma_pos, (len(idx), 2))
    out_xy, out_src = [xy], [idx]
    if model.mode != "ideal":
        counts = np.zeros((3, 3), int)
        np.add.at(counts, (quad[visible], band[visible]), 1)
        lam = counts * model.fp_rate
        n_fp = rng.poisson(lam)
        for q, b in zip(*np.nonzero(n_fp)):
            out_xy.append(_sample_zone(q, b, n_fp[q, b], robot_pose, model.max_range, rng))
            out_src.append(np.full(n_fp[q, b], -1))
    return Detections(np.vstack(out_xy).reshape(-1, 2), np.concatenate(out_src).astype(int))


# --- tracking ---------------------------------------------------------------

@dataclass
class TrackerParams:
    sigma_a: float = 0.5
    sigma_z: float = 0.1
    gate: float = 2.0
    conf_start: int = 1
    conf_max: int = 5
    conf_confirm: int = 2
    init_vel_var: float = 1.0


@dataclass
class Track:
    id: int
    state: np.ndarray  # x, y, vx, vy
    cov: np.ndarray
    confidence: int
    last_update: float
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY))

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[2:]


def _cv_matrices(dt, sigma_a):
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    g = np.array([0.5 * dt * dt, 0.5 * dt * dt, dt, dt])
    Q = np.zeros((4, 4))
    for axis in (0, 1):
        idx = [axis, axis + 2]
        gg = g[idx]
        Q[np.ix_(idx, idx)] = np.outer(gg, gg) * sigma_a ** 2
    return F, Q


_H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])


class TrackSet:
    """Kalman tracks with confidence bookkeeping; single writer."""

    def __init__(self, params: TrackerParams = TrackerParams()):
        self.params = params
        self.tracks: list[Track] = []
        self.time: float | None = None
        self._next_id = 0

    def __len__(self):
        return len(self.tracks)

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.confidence >= self.params.conf_confirm]

    def _predict(self, dt):
        if dt <= 0:
            return
        F, Q = _cv_matrices(dt, self.params.sigma_a)
        for t in self.tracks:
            t.state = F @ t.state
            t.cov = F @ t.cov @ F.T + Q

    def associate_update(self, detections, t: float) -> "TrackSet":
        """Predict to time ``t``, match by minimum total distance within the gate, update."""
        p = self.params
        z = np.asarray(getattr(detections, "xy", detections), dtype=float).reshape(-1, 2)
        self._predict(0.0 if self.time is None else t - self.time)
        self.time = t
        pairs = []
        if self.tracks and len(z):
            pred = np.array([tr.position for tr in self.tracks])
            cost = np.hypot(*(pred[:, None, :] - z[None, :, :]).transpose(2, 0, 1))
            gated = np.where(cost <= p.gate, cost, 1e6)  # out-of-gate pairs only as a last resort
            rows, cols = linear_sum_assignment(gated)
            pairs = [(r, c) for r, c in zip(rows, cols) if cost[r, c] <= p.gate]
        matched_t = {r for r, _ in pairs}
        matched_d = {c for _, c in pairs}
        R = np.eye(2) * p.sigma_z ** 2
        for r, c in pairs:
            tr = self.tracks[r]
            S = _H @ tr.cov @ _H.T + R
            K = tr.cov @ _H.T @ np.linalg.inv(S)
            tr.state = tr.state + K @ (z[c] - _H @ tr.state)
            tr.cov = (np.eye(4) - K @ _H) @ tr.cov
            tr.cov = 0.5 * (tr.cov + tr.cov.T)
            tr.confidence = min(tr.confidence + 1, p.conf_max)
            tr.last_update = t
        survivors = []
        for k, tr in enumerate(self.tracks):
            if k not in matched_t:
                tr.confidence -= 1
            if tr.confidence > 0:
                tr.history.append(tr.position.copy())
                survivors.append(tr)
        for c in range(len(z)):
            if c in matched_d:
                continue
            cov = np.diag([p.sigma_z ** 2, p.sigma_z ** 2, p.init_vel_var, p.init_vel_var])
            tr = Track(self._next_id, np.array([z[c, 0], z[c, 1], 0.0, 0.0]), cov, p.conf_start, t)
            tr.history.append(tr.position.copy())
            self._next_id += 1
            survivors.append(tr)
        self.tracks = survivors
        return self


def extrapolate_history(track: Track, horizon: int = HISTORY, dt: float = TICK) -> np.ndarray:
    """Exactly ``horizon`` positions, oldest first, back-filled at constant velocity."""
    hist = list(track.history)[-horizon:]
    if not hist:
        hist = [track.position.copy()]
    missing = horizon - len(hist)
    first = np.asarray(hist[0], dtype=float)
    back = [first - track.velocity * dt * k for k in range(missing, 0, -1)]
    return np.array(back + [np.asarray(h, dtype=float) for h in hist]).reshape(horizon, 2)


# --- occupancy --------------------------------------------------------------

@dataclass(frozen=True)
class OccupancyGrid:
    """Robot-centred, world-aligned grid; ``occupied[row, col]`` with row along +y."""

    origin: tuple[float, float]  # lower-left corner
    resolution: float
    occupied: np.ndarray
    dilation: float

    @property
    def shape(self):
        return self.occupied.shape

    def cell_index(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        col = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(int)
        row = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(int)
        return row, col

    def occupied_at(self, pts) -> np.ndarray:
        """Occupancy of the cells holding ``pts``; points outside the window read as free."""
        row, col = self.cell_index(pts)
        n_r, n_c = self.shape
        inside = (row >= 0) & (row < n_r) & (col >= 0) & (col < n_c)
        out = np.zeros(len(row), bool)
        out[inside] = self.occupied[row[inside], col[inside]]
        return out

    def centres(self) -> np.ndarray:
        """World coordinates of every occupied cell centre."""
        r, c = np.nonzero(self.occupied)
        return np.column_stack([self.origin[0] + (c + 0.5) * self.resolution,
                                self.origin[1] + (r + 0.5) * self.resolution])


def _boxes_hit_segments(lo, hi, a, b):
    """Liang-Barsky test: does segment a->b (per edge) meet box [lo, hi] (per cell)?"""
    d = (b - a)[None]
    t0 = np.zeros((len(lo), len(a)))
    t1 = np.ones((len(lo), len(a)))
    hit = np.ones((len(lo), len(a)), bool)
    for axis in (0, 1):
        da = d[..., axis]
        lo_t = (lo[:, None, axis] - a[None, :, axis])
        hi_t = (hi[:, None, axis] - a[None, :, axis])
        parallel = np.abs(da) < 1e-15
        hit &= ~(parallel & ((lo_t > 0) | (hi_t < 0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = np.where(parallel, -np.inf, lo_t / da)
            tb = np.where(parallel, np.inf, hi_t / da)
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return hit & (t0 <= t1)


def occupancy_snapshot(obstacles, robot_xy, dilation: float = 1.5, size: int = 60,
                       resolution: float = 0.5) -> OccupancyGrid:
    """Rasterise obstacle polygons into the robot-centred grid and dilate by a disc."""
    half = 0.5 * size * resolution
    origin = (float(robot_xy[0]) - half, float(robot_xy[1]) - half)
    occ = np.zeros((size, size), bool)
    idx = np.arange(size)
    cx = origin[0] + (idx + 0.5) * resolution
    cy = origin[1] + (idx + 0.5) * resolution
    gx, gy = np.meshgrid(cx, cy)
    centres = np.column_stack([gx.ravel(), gy.ravel()])
    h = 0.5 * resolution  # touching a cell's boundary does not occupy it
    for poly in getattr(obstacles, "polygons", obstacles):
        poly = np.asarray(poly, dtype=float)
        pmin, pmax = poly.min(axis=0), poly.max(axis=0)
        near = ((centres[:, 0] + h >= pmin[0]) & (centres[:, 0] - h <= pmax[0])
                & (centres[:, 1] + h >= pmin[1]) & (centres[:, 1] - h <= pmax[1]))
        if not near.any():
            continue
        sub = centres[near]
        hit = _boxes_hit_segments(sub - h + 1e-9, sub + h - 1e-9, poly, np.roll(poly, -1, axis=0)).any(axis=1)
        x, y = sub[:, 0:1], sub[:, 1:2]
        xa, ya = poly[:, 0], poly[:, 1]
        xb, yb = np.roll(xa, -1), np.roll(ya, -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xa + (y - ya) * (xb - xa) / (yb - ya)
        crossing = ((ya > y) != (yb > y)) & (x < xint)
        hit |= (np.count_nonzero(crossing, axis=1) % 2) == 1
        flat = occ.ravel()
        flat[np.nonzero(near)[0][hit]] = True
        occ = flat.reshape(size, size)
    k = int(math.ceil(dilation / resolution - 1e-9))
    if k > 0 and occ.any():
        yy, xx = np.mgrid[-k:k + 1, -k:k + 1]
        occ = ndimage.binary_dilation(occ, structure=(xx ** 2 + yy ** 2) <= k * k)
    occ.setflags(write=False)
    return OccupancyGrid(origin, resolution, occ, dilation)
