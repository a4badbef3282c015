"""Probabilistic roadmap over the free, stable part of the terrain.

Vertices are sampled poses; arcs are directed clothoids between poses closer
than ``r_conn`` in 3D, kept only when they respect the curvature bound, stay
clear of obstacles by ``robot_radius + delta`` and never tip the robot past its
tilt limit. Each arc carries the energy needed to drive it at nominal speed.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..energy import EnergyParams, power_array
from ..terrain import SurfacePose, World
from .clothoid import ClothoidSegment, fit_g1, sample_batch

_ARC_CHUNK = 4000


class TooConstrainedError(RuntimeError):
    """Rejection sampling gave up: the free space is too small or too unstable."""


class GoalInCollisionError(ValueError):
    def __init__(self, index: int, point):
        super().__init__(f"goal {index} at ({point[0]:.3f}, {point[1]:.3f}) is not in free space")
        self.index = index


@dataclass(frozen=True)
class PRMParams:
    n_s: int = 500
    r_conn: float = 4.0
    kappa_max: float = 0.70
    subsample_step: float = 0.25
    delta: float = 0.1
    rng_seed: int = 0
    robot_radius: float = 1.5
    nominal_speed: float = 0.9
    max_length_factor: float = 3.0  # arcs longer than this many r_conn are dropped
    sample_bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.n_s < 0:
            raise ValueError("n_s must be non-negative")
        if not self.r_conn > 0 or not self.kappa_max > 0:
            raise ValueError("r_conn and kappa_max must be positive")
        if not 0 < self.subsample_step < self.r_conn:
            raise ValueError("subsample_step must lie in (0, r_conn)")
        if self.delta < 0 or self.robot_radius < 0:
            raise ValueError("clearances must be non-negative")

    @property
    def arc_clearance(self) -> float:
        return self.robot_radius + self.delta


@dataclass
class Roadmap:
    """Directed pose graph. Arc ``k`` runs ``src[k] -> dst[k]``."""

    vertices: list[SurfacePose]
    goal_ids: list[int]
    src: np.ndarray
    dst: np.ndarray
    segments: list[ClothoidSegment]
    cost: np.ndarray  # J per arc
    subsample_step: float = 0.25
    rejections: Counter = field(default_factory=Counter)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_arcs(self) -> int:
        return len(self.src)

    def arc_polyline(self, k: int, world: World) -> np.ndarray:
        """3D points along arc ``k`` at no more than ``subsample_step`` spacing."""
        seg = self.segments[k]
        xy = seg.points(seg.stations(self.subsample_step))
        z = world.heightmap.sample(xy)
        return np.column_stack([xy, z])


def sample_free(world: World, n_s: int, params: PRMParams, rng: np.random.Generator) -> list[SurfacePose]:
    """Uniform rejection sampling of stable poses with the arc clearance.

    Sampled positions keep ``robot_radius + delta`` from obstacles, which is
    stricter than ``delta`` alone, so arcs leaving a vertex are not rejected at
    their first station.
    """
    if n_s == 0:
        return []
    xmin, ymin, xmax, ymax = params.sample_bounds or world.bounds
    out: list[tuple[float, float, float]] = []
    tries = 0
    budget = 1000 * n_s
    batch = max(64, 2 * n_s)
    while len(out) < n_s:
        if tries >= budget:
            raise TooConstrainedError(
                f"environment too constrained: {len(out)} of {n_s} samples after {tries} draws")
        m = min(batch, budget - tries)
        xy = np.column_stack([rng.uniform(xmin, xmax, m), rng.uniform(ymin, ymax, m)])
        psi = rng.uniform(0.0, 2.0 * math.pi, m)
        ok = world.free_mask(xy, params.arc_clearance)
        ok[ok] = world.stable_mask(xy[ok], psi[ok])
        for i in np.nonzero(ok)[0]:
            out.append((xy[i, 0], xy[i, 1], psi[i]))
            if len(out) == n_s:
                break
        tries += m
    return [world.surface_pose(x, y, psi) for x, y, psi in out]


def _arc_energy(owner, xy, z, n_arcs, speed, energy):
    """Energy of every sampled arc, summed segment by segment."""
    same = owner[1:] == owner[:-1]
    d = np.diff(xy, axis=0)
    horiz = np.hypot(d[:, 0], d[:, 1])
    dz = np.diff(z)
    length = np.sqrt(horiz ** 2 + dz ** 2)
    keep = same & (length > 0)
    slope = np.arctan2(dz[keep], horiz[keep])
    p = power_array(np.full(slope.shape, speed), slope, energy)
    return np.bincount(owner[1:][keep], weights=p * length[keep] / speed, minlength=n_arcs)


def connect_batch(world: World, poses: np.ndarray, free: np.ndarray, pairs: np.ndarray,
                  params: PRMParams, energy: EnergyParams = EnergyParams()):
    """Fit and check clothoids for index pairs ``(i, j)`` into ``poses`` (x, y, psi rows).

    Returns ``(accepted_mask, segments, costs, reasons)``; ``segments`` and
    ``costs`` cover the accepted pairs only, in pair order.
    """
    reasons = Counter()
    if len(pairs) == 0:
        return np.zeros(0, bool), [], np.zeros(0), reasons
    i, j = pairs[:, 0], pairs[:, 1]
    th, k0, dk, L, ok = fit_g1(poses[i, :2], poses[i, 2], poses[j, :2], poses[j, 2], free[i], free[j])
    reasons["nonconvergence"] += int(np.count_nonzero(~ok))

    chord = np.hypot(*(poses[j, :2] - poses[i, :2]).T)
    too_long = ok & (L > params.max_length_factor * np.maximum(chord, params.r_conn))
    reasons["length"] += int(np.count_nonzero(too_long))
    ok &= ~too_long

    kmax = np.maximum(np.abs(k0), np.abs(k0 + dk * L))
    curvy = ok & (kmax > params.kappa_max)
    reasons["curvature"] += int(np.count_nonzero(curvy))
    ok &= ~curvy

    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return ok, [], np.zeros(0), reasons
    owner, s, xy, heading, kappa = sample_batch(
        poses[i[idx], 0], poses[i[idx], 1], th[idx], k0[idx], dk[idx], L[idx], params.subsample_step)
    bad_kappa = np.zeros(len(idx), bool)
    np.logical_or.at(bad_kappa, owner, np.abs(kappa) > params.kappa_max * (1 + 1e-9))
    reasons["curvature"] += int(np.count_nonzero(bad_kappa))

    collide = np.zeros(len(idx), bool)
    np.logical_or.at(collide, owner, ~world.free_mask(xy, params.arc_clearance))
    collide &= ~bad_kappa
    reasons["collision"] += int(np.count_nonzero(collide))

    unstable = np.zeros(len(idx), bool)
    live = ~(bad_kappa | collide)
    sel = live[owner]
    np.logical_or.at(unstable, owner[sel], ~world.stable_mask(xy[sel], heading[sel]))
    reasons["unstable"] += int(np.count_nonzero(unstable))

    good = live & ~unstable
    z = world.heightmap.sample(xy)
    costs_all = _arc_energy(owner, xy, z, len(idx), params.nominal_speed, energy)
    ok[idx] = good
    segments = [
        ClothoidSegment(float(poses[i[a], 0]), float(poses[i[a], 1]), float(th[a]),
                        float(k0[a]), float(dk[a]), float(L[a]))
        for a in idx[good]
    ]
    return ok, segments, costs_all[good], reasons


def connect_clothoid(pose_i, pose_j, world: World, params: PRMParams,
                     free_i: bool = False, free_j: bool = False,
                     energy: EnergyParams = EnergyParams()):
    """Connect two (x, y, psi) poses; returns ``(segment, energy)`` or ``(None, reason)``."""
    poses = np.array([pose_i[:3], pose_j[:3]], dtype=float)
    ok, segs, costs, reasons = connect_batch(
        world, poses, np.array([free_i, free_j]), np.array([[0, 1]]), params, energy)
    if ok[0]:
        return segs[0], float(costs[0])
    return None, next(iter(reasons.elements()))


def generate_roadmap(world: World, goals, params: PRMParams = PRMParams(),
                     energy: EnergyParams = EnergyParams()):
    """Sample, connect and cost a roadmap; goal vertices are appended after samples.

    Goal vertices have no fixed heading: arcs into or out of a goal are free
    at the goal end. Returns ``(roadmap, costs)`` with ``costs`` aligned to arcs.
    """
    goals = np.asarray(goals, dtype=float).reshape(-1, 2)
    for g, p in enumerate(goals):
        if not world.is_free(p, params.delta):
            raise GoalInCollisionError(g, p)
    rng = np.random.default_rng(params.rng_seed)
    vertices = sample_free(world, params.n_s, params, rng)
    goal_ids = []
    for p in goals:
        goal_ids.append(len(vertices))
        vertices.append(world.surface_pose(p[0], p[1], 0.0))

    poses = np.array([[v.x, v.y, v.psi] for v in vertices]).reshape(-1, 3)
    free = np.zeros(len(vertices), bool)
    free[goal_ids] = True
    pts3 = np.array([[v.x, v.y, v.z] for v in vertices]).reshape(-1, 3)
    pairs = np.array(sorted(cKDTree(pts3).query_pairs(params.r_conn)), dtype=int).reshape(-1, 2)
    pairs = np.vstack([pairs, pairs[:, ::-1]])
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]

    src, dst, segments, costs = [], [], [], []
    reasons = Counter()
    for lo in range(0, len(pairs), _ARC_CHUNK):
        chunk = pairs[lo:lo + _ARC_CHUNK]
        ok, segs, c, why = connect_batch(world, poses, free, chunk, params, energy)
        src.append(chunk[ok, 0])
        dst.append(chunk[ok, 1])
        segments.extend(segs)
        costs.append(c)
        reasons.update(why)
    cost = np.concatenate(costs) if costs else np.zeros(0)
    roadmap = Roadmap(
        vertices=vertices,
        goal_ids=goal_ids,
        src=np.concatenate(src) if src else np.zeros(0, int),
        dst=np.concatenate(dst) if dst else np.zeros(0, int),
        segments=segments,
        cost=cost,
        subsample_step=params.subsample_step,
        rejections=reasons,
    )
    return roadmap, cost
