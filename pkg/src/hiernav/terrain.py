"""2.5D world model: heightmap terrain plus polygonal no-go regions.

Elevation samples live on grid nodes (node-registered): node ``(row, col)`` sits
at ``origin + (col * cell_size, row * cell_size)`` with row 0 at the south edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TILT_MAX = 0.52


class OutOfBoundsError(ValueError):
    """Raised when a query falls outside the heightmap."""


class NoDataError(ValueError):
    """Raised when a query touches a nodata cell."""


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w <= -math.pi, w + 2.0 * math.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class Heightmap:
    origin: tuple[float, float]
    cell_size: float
    elevations: np.ndarray  # (nrows, ncols), row 0 = south
    nodata: float = -9999.0

    def __post_init__(self):
        z = np.asarray(self.elevations, dtype=float)
        if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
            raise ValueError("heightmap needs at least a 2x2 grid of nodes")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        z = np.where(z == self.nodata, np.nan, z)
        z.setflags(write=False)
        object.__setattr__(self, "elevations", z)

    @property
    def nrows(self) -> int:
        return self.elevations.shape[0]

    @property
    def ncols(self) -> int:
        return self.elevations.shape[1]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + (self.ncols - 1) * self.cell_size, y0 + (self.nrows - 1) * self.cell_size)

    @classmethod
    def flat(cls, bounds, cell_size: float = 1.0, elevation: float = 0.0) -> "Heightmap":
        xmin, ymin, xmax, ymax = bounds
        ncols = int(round((xmax - xmin) / cell_size)) + 1
        nrows = int(round((ymax - ymin) / cell_size)) + 1
        return cls((xmin, ymin), cell_size, np.full((nrows, ncols), float(elevation)))

    @classmethod
    def from_function(cls, bounds, cell_size: float, fn) -> "Heightmap":
        """Sample ``fn(x, y)`` (vectorised) on the node lattice."""
        xmin, ymin, xmax, ymax = bounds
        ncols = int(round((xmax - xmin) / cell_size)) + 1
        nrows = int(round((ymax - ymin) / cell_size)) + 1
        xs = xmin + cell_size * np.arange(ncols)
        ys = ymin + cell_size * np.arange(nrows)
        X, Y = np.meshgrid(xs, ys)
        return cls((xmin, ymin), cell_size, np.asarray(fn(X, Y), dtype=float))

    def in_bounds(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        xmin, ymin, xmax, ymax = self.bounds
        eps = 1e-9
        return (
            (pts[:, 0] >= xmin - eps) & (pts[:, 0] <= xmax + eps)
            & (pts[:, 1] >= ymin - eps) & (pts[:, 1] <= ymax + eps)
        )

    def _cell_coords(self, pts):
        x0, y0 = self.origin
        gx = (pts[:, 0] - x0) / self.cell_size
        gy = (pts[:, 1] - y0) / self.cell_size
        c = np.clip(np.floor(gx).astype(int), 0, self.ncols - 2)
        r = np.clip(np.floor(gy).astype(int), 0, self.nrows - 2)
        return r, c, gx - c, gy - r

    def sample(self, pts) -> np.ndarray:
        """Bilinear elevation for in-bounds points; NaN where a corner is nodata.

        No bounds check: points outside are clamped onto the edge cells.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        r, c, fx, fy = self._cell_coords(pts)
        fx = np.clip(fx, 0.0, 1.0)
        fy = np.clip(fy, 0.0, 1.0)
        z = self.elevations
        z00 = z[r, c]
        z10 = z[r, c + 1]
        z01 = z[r + 1, c]
        z11 = z[r + 1, c + 1]
        return (z00 * (1 - fx) * (1 - fy) + z10 * fx * (1 - fy)
                + z01 * (1 - fx) * fy + z11 * fx * fy)

    def elevations_at(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        inb = self.in_bounds(pts)
        if not inb.all():
            bad = pts[~inb][0]
            raise OutOfBoundsError(f"point ({bad[0]:.3f}, {bad[1]:.3f}) outside heightmap {self.bounds}")
        z = self.sample(pts)
        if np.isnan(z).any():
            bad = pts[np.isnan(z)][0]
            raise NoDataError(f"point ({bad[0]:.3f}, {bad[1]:.3f}) touches a nodata cell")
        return z

    def elevation_at(self, p) -> float:
        return float(self.elevations_at(np.asarray(p, dtype=float).reshape(1, 2))[0])


def read_ascii_grid(path) -> Heightmap:
    """Read an ESRI-style ASCII grid. The first data row is the northern edge."""
    path = Path(path)
    header = {}
    rows = []
    with path.open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            key = parts[0].lower()
            if not rows and key in {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter",
                                    "yllcenter", "cellsize", "nodata_value"}:
                header[key] = float(parts[1])
                continue
            rows.append([float(v) for v in parts])
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cell = header["cellsize"]
    except KeyError as exc:
        raise ValueError(f"{path}: missing header field {exc.args[0]}") from None
    x0 = header.get("xllcorner", header.get("xllcenter", 0.0))
    y0 = header.get("yllcorner", header.get("yllcenter", 0.0))
    data = np.array([v for row in rows for v in row], dtype=float)
    if data.size != ncols * nrows:
        raise ValueError(f"{path}: expected {ncols * nrows} values, found {data.size}")
    z = data.reshape(nrows, ncols)[::-1]
    return Heightmap((x0, y0), cell, z, header.get("nodata_value", -9999.0))


def write_ascii_grid(hm: Heightmap, path) -> None:
    z = np.where(np.isnan(hm.elevations), hm.nodata, hm.elevations)[::-1]
    lines = [
        f"ncols {hm.ncols}",
        f"nrows {hm.nrows}",
        f"xllcorner {hm.origin[0]!r}",
        f"yllcorner {hm.origin[1]!r}",
        f"cellsize {hm.cell_size!r}",
        f"nodata_value {hm.nodata!r}",
    ]
    lines += [" ".join(f"{v:.4f}" for v in row) for row in z]
    Path(path).write_text("\n".join(lines) + "\n")


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(poly: np.ndarray) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


class ObstacleSet:
    """Simple polygons in world metres; E_obs is their union."""

    def __init__(self, polygons: Iterable[Sequence[Sequence[float]]] = ()):
        self.polygons: list[np.ndarray] = []
        for poly in polygons:
            arr = np.asarray(poly, dtype=float).reshape(-1, 2)
            if len(arr) < 3:
                raise ValueError("obstacle polygon needs at least 3 vertices")
            if not _is_simple(arr):
                raise ValueError("obstacle polygon is self-intersecting")
            self.polygons.append(arr)
        if self.polygons:
            starts = np.concatenate(self.polygons)
            ends = np.concatenate([np.roll(p, -1, axis=0) for p in self.polygons])
            self._seg_a, self._seg_b = starts, ends
            self._poly_id = np.concatenate([np.full(len(p), i) for i, p in enumerate(self.polygons)])
        else:
            self._seg_a = self._seg_b = np.zeros((0, 2))
            self._poly_id = np.zeros(0, dtype=int)

    def __len__(self):
        return len(self.polygons)

    def contains(self, pts) -> np.ndarray:
        """Even-odd point-in-polygon over all polygons (boundary counts as inside)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        inside = np.zeros(len(pts), dtype=bool)
        for poly in self.polygons:
            x, y = pts[:, 0:1], pts[:, 1:2]
            xa, ya = poly[:, 0], poly[:, 1]
            xb, yb = np.roll(xa, -1), np.roll(ya, -1)
            cond = (ya > y) != (yb > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = xa + (y - ya) * (xb - xa) / (yb - ya)
            crossing = cond & (x < xint)
            inside |= (np.count_nonzero(crossing, axis=1) % 2) == 1
        if len(self.polygons):
            inside |= self.edge_distance(pts) <= 1e-12
        return inside

    def edge_distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if not len(self._seg_a):
            return np.full(len(pts), np.inf)
        return point_segment_distance(pts, self._seg_a, self._seg_b).min(axis=1)

    def distance(self, pts) -> np.ndarray:
        """Distance to E_obs (0 inside a polygon, inf when there are no obstacles)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        d = self.edge_distance(pts)
        if len(self.polygons):
            d = np.where(self.contains(pts), 0.0, d)
        return d


def point_segment_distance(pts, a, b) -> np.ndarray:
    """Pairwise distances, shape (len(pts), len(a))."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 1, 2)
    ab = (b - a)[None]
    ap = pts - a[None]
    denom = np.einsum("ijk,ijk->ij", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, np.einsum("ijk,ijk->ij", ap, ab) / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab
    return np.linalg.norm(pts - closest, axis=-1)


@dataclass(frozen=True)
class SurfacePose:
    x: float
    y: float
    psi: float
    z: float
    roll: float
    pitch: float
    stable: bool

    @property
    def tilt(self) -> float:
        return math.hypot(self.roll, self.pitch)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


# Plane-fit stencil: centre plus rings at 0.5 m and 1.0 m, eight bearings each.
_ang = np.arange(8) * (math.pi / 4)
_STENCIL = np.vstack([
    [[0.0, 0.0]],
    0.5 * np.column_stack([np.cos(_ang), np.sin(_ang)]),
    1.0 * np.column_stack([np.cos(_ang), np.sin(_ang)]),
])
_DESIGN = np.column_stack([_STENCIL, np.ones(len(_STENCIL))])
_FIT = np.linalg.pinv(_DESIGN)  # rows: d/dx, d/dy, offset


@dataclass(frozen=True)
class World:
    heightmap: Heightmap
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    tilt_max: float = DEFAULT_TILT_MAX

    @property
    def bounds(self):
        return self.heightmap.bounds

    def elevation_at(self, p) -> float:
        return self.heightmap.elevation_at(p)

    def slope_along(self, p, heading: float, step: float) -> float:
        """Terrain slope (rad) travelling ``step`` metres from ``p``; positive uphill."""
        p = np.asarray(p, dtype=float)
        q = p + step * np.array([math.cos(heading), math.sin(heading)])
        z = self.heightmap.elevations_at(np.vstack([p, q]))
        return math.atan((z[1] - z[0]) / step)

    def clearance(self, pts) -> np.ndarray:
        """Distance to E_obs, -inf for points inside an obstacle, out of bounds or on nodata."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        d = self.obstacles.edge_distance(pts)
        bad = ~self.heightmap.in_bounds(pts)
        if len(self.obstacles.polygons):
            bad |= self.obstacles.contains(pts)
        bad |= np.isnan(self.heightmap.sample(pts))
        return np.where(bad, -np.inf, d)

    def free_mask(self, pts, clearance: float) -> np.ndarray:
        return self.clearance(pts) >= clearance

    def is_free(self, p, clearance: float = 0.0) -> bool:
        return bool(self.free_mask(np.asarray(p, dtype=float).reshape(1, 2), clearance)[0])

    def gradients(self, pts) -> np.ndarray:
        """Least-squares plane gradient over the 1 m stencil, shape (n, 2)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        stencil = pts[:, None, :] + _STENCIL[None]
        xmin, ymin, xmax, ymax = self.bounds
        stencil[..., 0] = np.clip(stencil[..., 0], xmin, xmax)
        stencil[..., 1] = np.clip(stencil[..., 1], ymin, ymax)
        z = self.heightmap.sample(stencil.reshape(-1, 2)).reshape(len(pts), len(_STENCIL))
        return z @ _FIT[:2].T

    def tilt_components(self, pts, psi):
        """Pitch and roll (rad) as the tilt vector resolved along/across the heading.

        The magnitude ``hypot(roll, pitch)`` equals the plane's inclination, so it
        does not depend on heading.
        """
        g = self.gradients(pts)
        psi = np.broadcast_to(np.asarray(psi, dtype=float), (len(g),))
        slope = np.hypot(g[:, 0], g[:, 1])
        tilt = np.arctan(slope)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(slope > 0, g[:, 0] / slope, 0.0)
            uy = np.where(slope > 0, g[:, 1] / slope, 0.0)
        c, s = np.cos(psi), np.sin(psi)
        pitch = tilt * (ux * c + uy * s)
        roll = tilt * (-ux * s + uy * c)
        return roll, pitch

    def stable_mask(self, pts, psi=0.0) -> np.ndarray:
        roll, pitch = self.tilt_components(pts, psi)
        tilt = np.hypot(roll, pitch)
        return np.nan_to_num(tilt, nan=np.inf) <= self.tilt_max

    def surface_pose(self, x: float, y: float, psi: float) -> SurfacePose:
        z = self.heightmap.elevation_at((x, y))
        roll, pitch = self.tilt_components(np.array([[x, y]]), psi)
        roll, pitch = float(roll[0]), float(pitch[0])
        stable = bool(math.hypot(roll, pitch) <= self.tilt_max)
        return SurfacePose(float(x), float(y), wrap_angle(psi), z, roll, pitch, stable)
