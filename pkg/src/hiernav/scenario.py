"""Scenario files: a line-oriented, sectioned ``key = value`` format.

Grammar::

    file     := { blank | comment | header | entry }
    comment  := '#' text
    header   := '[' name ']'          name in world, goals, crowd, perception,
                                      planner, energy, run
    entry    := key '=' value         (any section)
              | x y [accuracy]        (goals section only)

Repeatable keys: ``obstacle = x y; x y; x y ...`` in ``[world]`` and
``agent = x y gx gy speed`` in ``[crowd]``. Everything else takes the last
value given. ``seed`` in ``[run]`` is mandatory.

Example::

    [world]
    bounds = 0 0 60 20
    start = 5 10 0
    [goals]
    55 10 1.0
    [crowd]
    density = 10
    arena = 20 0 40 20
    [run]
    seed = 3
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .energy import EnergyParams
from .perception import DetectionModel
from .terrain import DEFAULT_TILT_MAX, Heightmap, ObstacleSet, World, read_ascii_grid

SECTIONS = ("world", "goals", "crowd", "perception", "planner", "energy", "run")
PLANNERS = ("mcts", "pf", "fs")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""


@dataclass(frozen=True)
class CrowdConfig:
    density: float = 0.0  # m^2 per agent; 0 disables spawning
    arena: tuple[float, float, float, float] | None = None
    agents: tuple[tuple[float, ...], ...] = ()
    policy: str = "opposite"
    radius: float = 0.5
    neighbour_dist: float = 1.5
    keep_out: float = 3.0  # clear radius around the robot start at spawn


@dataclass(frozen=True)
class PlannerConfig:
    planner: str = "mcts"
    budget_iters: int = 2000
    horizon: int = 8
    d: float = 2.0
    n_s: int = 500
    r_conn: float = 4.0
    kappa_max: float = 0.70
    subsample_step: float = 0.25
    delta: float = 0.1
    nominal_speed: float = 0.9
    sample_bounds: tuple[float, float, float, float] | None = None
    prm_seed: int | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    duration: float = 120.0
    dwell_s: float = 5.0
    v_max: float = 1.0
    cruise: float = 0.9
    latch_s: float = 2.0
    delay_s: float = 0.2
    robot_radius: float = 1.5
    closed: bool = False


@dataclass(frozen=True)
class Scenario:
    world: World
    start: tuple[float, float, float]
    goals: np.ndarray  # (n, 2)
    accuracy: np.ndarray  # (n,)
    crowd: CrowdConfig
    detection: DetectionModel
    planner: PlannerConfig
    energy: EnergyParams
    run: RunConfig
    source: str = ""
    world_key: str = field(default="", compare=False)

    def with_overrides(self, planner=None, seed=None, duration=None, budget_iters=None) -> "Scenario":
        pc, rc = self.planner, self.run
        if planner is not None:
            if planner not in PLANNERS:
                raise ScenarioError(f"unknown planner {planner!r}")
            pc = replace(pc, planner=planner)
        if budget_iters is not None:
            pc = replace(pc, budget_iters=int(budget_iters))
        if seed is not None:
            rc = replace(rc, seed=int(seed))
        if duration is not None:
            rc = replace(rc, duration=float(duration))
        return replace(self, planner=pc, run=rc)


def _floats(text: str, n: int | None = None, what: str = "value") -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ScenarioError(f"bad number in {what}: {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ScenarioError(f"{what} needs {n} numbers, got {len(vals)}")
    return vals


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"not a boolean: {text!r}")


def parse_sections(text: str):
    """Split scenario text into ``{section: ([(key, value)], [bare lines])}``."""
    out = {s: ([], []) for s in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"line {lineno}: unterminated section header")
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ScenarioError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ScenarioError(f"line {lineno}: entry outside any section")
        if "=" in line:
            k, v = line.split("=", 1)
            out[section][0].append((k.strip().lower(), v.strip()))
        elif section == "goals":
            out[section][1].append((lineno, line))
        else:
            raise ScenarioError(f"line {lineno}: expected key = value")
    return out


def _last(pairs, key, default=None):
    val = default
    for k, v in pairs:
        if k == key:
            val = v
    return val


def _all(pairs, key):
    return [v for k, v in pairs if k == key]


def _check_keys(pairs, allowed, section):
    for k, _ in pairs:
        if k not in allowed:
            raise ScenarioError(f"unknown key {k!r} in [{section}]")


def _world(pairs, base: Path):
    _check_keys(pairs, {"heightmap", "bounds", "cell_size", "elevation", "ramp", "tilt_max",
                        "obstacle", "start"}, "world")
    hm_path = _last(pairs, "heightmap")
    if hm_path:
        path = (base / hm_path) if not Path(hm_path).is_absolute() else Path(hm_path)
        if not path.exists():
            raise ScenarioError(f"heightmap file not found: {path}")
        hm = read_ascii_grid(path)
    else:
        bounds = _last(pairs, "bounds")
        if bounds is None:
            raise ScenarioError("[world] needs a heightmap or bounds")
        b = _floats(bounds, 4, "bounds")
        cell = float(_last(pairs, "cell_size", "1.0"))
        z0 = float(_last(pairs, "elevation", "0"))
        gx, gy = _floats(_last(pairs, "ramp", "0 0"), 2, "ramp")
        hm = Heightmap.from_function(b, cell, lambda x, y: z0 + gx * (x - b[0]) + gy * (y - b[1]))
    polys = []
    for v in _all(pairs, "obstacle"):
        verts = [_floats(p, 2, "obstacle vertex") for p in v.split(";") if p.strip()]
        polys.append(verts)
    try:
        obstacles = ObstacleSet(polys)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    world = World(hm, obstacles, float(_last(pairs, "tilt_max", str(DEFAULT_TILT_MAX))))
    start = _last(pairs, "start")
    if start is None:
        raise ScenarioError("[world] needs start = x y heading")
    s = _floats(start, None, "start")
    if len(s) not in (2, 3):
        raise ScenarioError("start needs x y [heading]")
    return world, (s[0], s[1], s[2] if len(s) == 3 else 0.0)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    return parse_scenario(text, path.parent, source=str(path))


def parse_scenario(text: str, base: Path | str = ".", source: str = "") -> Scenario:
    sec = parse_sections(text)
    base = Path(base)
    world, start = _world(sec["world"][0], base)

    gpairs, glines = sec["goals"]
    _check_keys(gpairs, {"closed"}, "goals")
    goals, acc = [], []
    for lineno, line in glines:
        vals = _floats(line, None, f"goal on line {lineno}")
        if len(vals) not in (2, 3):
            raise ScenarioError(f"line {lineno}: goal needs x y [accuracy]")
        goals.append(vals[:2])
        acc.append(vals[2] if len(vals) == 3 else 1.0)
    if not goals:
        raise ScenarioError("[goals] is empty")
    if any(a <= 0 for a in acc):
        raise ScenarioError("goal accuracy must be positive")

    cp = sec["crowd"][0]
    _check_keys(cp, {"density", "arena", "agent", "policy", "radius", "neighbour_dist", "keep_out"}, "crowd")
    arena = _last(cp, "arena")
    crowd = CrowdConfig(
        density=float(_last(cp, "density", "0")),
        arena=_floats(arena, 4, "arena") if arena else None,
        agents=tuple(_floats(a, 5, "agent") for a in _all(cp, "agent")),
        policy=_last(cp, "policy", "opposite"),
        radius=float(_last(cp, "radius", "0.5")),
        neighbour_dist=float(_last(cp, "neighbour_dist", "1.5")),
        keep_out=float(_last(cp, "keep_out", "3.0")),
    )
    if crowd.density < 0:
        raise ScenarioError("crowd density must be non-negative")
    if crowd.policy not in ("opposite", "stop"):
        raise ScenarioError(f"unknown goal policy {crowd.policy!r}")

    pp = sec["perception"][0]
    _check_keys(pp, {"model", "sigma_pos", "max_range", "recall", "precision"}, "perception")
    kw = {"sigma_pos": float(_last(pp, "sigma_pos", "0.1")), "max_range": float(_last(pp, "max_range", "15"))}
    try:
        det = DetectionModel.preset(_last(pp, "model", "swagbot-table1"), **kw)
        rec, prec = _last(pp, "recall"), _last(pp, "precision")
        if rec or prec:
            r = np.array(_floats(rec, 9, "recall")).reshape(3, 3) if rec else det.recall
            p = np.array(_floats(prec, 9, "precision")).reshape(3, 3) if prec else det.precision
            det = DetectionModel(r, p, det.sigma_pos, det.max_range, "table1")
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    lp = sec["planner"][0]
    fields = PlannerConfig.__dataclass_fields__
    _check_keys(lp, set(fields), "planner")
    kw = {}
    for k, v in lp:
        if k == "planner":
            if v not in PLANNERS:
                raise ScenarioError(f"unknown planner {v!r}")
            kw[k] = v
        elif k == "sample_bounds":
            kw[k] = _floats(v, 4, "sample_bounds")
        elif k in ("budget_iters", "horizon", "n_s", "prm_seed"):
            kw[k] = int(v)
        else:
            kw[k] = float(v)
    planner = PlannerConfig(**kw)

    ep = sec["energy"][0]
    _check_keys(ep, {"mass_kg", "mu", "g", "static_w"}, "energy")
    energy = EnergyParams(**{k: float(v) for k, v in ep})

    rp = sec["run"][0]
    _check_keys(rp, set(RunConfig.__dataclass_fields__), "run")
    if _last(rp, "seed") is None:
        raise ScenarioError("[run] seed is mandatory")
    kw = {}
    for k, v in rp:
        kw[k] = _bool(v) if k == "closed" else int(v) if k == "seed" else float(v)
    if _last(gpairs, "closed") is not None:
        kw["closed"] = _bool(_last(gpairs, "closed"))
    run = RunConfig(**kw)
    if not run.duration > 0:
        raise ScenarioError("duration must be positive")
    return Scenario(world, start, np.array(goals, dtype=float), np.array(acc, dtype=float), crowd, det,
                    planner, energy, run, source, world_key=str(base.resolve()) + text_key(sec))


def text_key(sec) -> str:
    """Canonical text of the sections that determine the offline tour."""
    parts = []
    for name in ("world", "goals", "planner", "energy"):
        pairs, lines = sec[name]
        keep = [(k, v) for k, v in pairs if k not in ("planner", "budget_iters", "horizon", "d")]
        parts.append(f"[{name}]" + repr(keep) + repr([ln for _, ln in lines]))
    return "\n".join(parts)

