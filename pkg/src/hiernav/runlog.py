"""Per-tick run records and their CSV form.

Record 0 is the initial state; record ``k`` covers the tick ``(t[k-1], t[k]]``
and its ``energy`` column is the energy spent during that tick. Header lines
starting with ``#`` carry the run metadata, the goals and the reference tour.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_COLS = ("t", "x", "y", "heading", "speed", "vx", "vy", "power", "energy", "goal_x", "goal_y",
              "min_agent_dist", "deviation")
INT_COLS = ("fs", "dyn", "goal_idx", "n_detected", "plan_id", "dwell")
STR_COLS = ("mode", "agents", "tracks")
COLUMNS = ("t", "x", "y", "heading", "speed", "vx", "vy", "mode", "fs", "dyn", "power", "energy",
           "goal_idx", "goal_x", "goal_y", "n_detected", "min_agent_dist", "deviation", "plan_id",
           "dwell", "agents", "tracks")
VERSION = "hiernav-runlog 1"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        s = f"{float(v):.6f}"
        return "0.000000" if s == "-0.000000" else s
    return str(v)


def format_points(xy, ids=None) -> str:
    """``x:y`` pairs (``id:x:y`` with ids) joined by ``;`` at millimetre precision."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if ids is None:
        return ";".join(f"{x:.3f}:{y:.3f}" for x, y in xy)
    return ";".join(f"{i}:{x:.3f}:{y:.3f}" for i, (x, y) in zip(ids, xy))


def parse_points(text: str, with_ids: bool = False):
    if not text:
        return (np.zeros(0, int), np.zeros((0, 2))) if with_ids else np.zeros((0, 2))
    rows = [p.split(":") for p in text.split(";")]
    if with_ids:
        return np.array([int(r[0]) for r in rows]), np.array([[float(r[1]), float(r[2])] for r in rows])
    return np.array([[float(r[0]), float(r[1])] for r in rows])


@dataclass
class RunLog:
    meta: dict = field(default_factory=dict)
    goals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    accuracy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tour: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rows: list = field(default_factory=list)

    def append(self, **rec):
        missing = set(COLUMNS) - rec.keys()
        if missing:
            raise KeyError(f"record lacks columns {sorted(missing)}")
        self.rows.append(rec)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name in STR_COLS:
            return np.array([r[name] for r in self.rows], dtype=object)
        dtype = int if name in INT_COLS else float
        return np.array([r[name] for r in self.rows], dtype=dtype)

    def __getattr__(self, name):
        if name in COLUMNS:
            return self.column(name)
        raise AttributeError(name)

    def agent_positions(self, k: int) -> np.ndarray:
        return parse_points(self.rows[k]["agents"])

    # --- CSV ---

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {VERSION}\n")
        for k in sorted(self.meta):
            buf.write(f"# meta {k} {self.meta[k]}\n")
        for (gx, gy), a in zip(self.goals, self.accuracy):
            buf.write(f"# goal {_fmt(float(gx))} {_fmt(float(gy))} {_fmt(float(a))}\n")
        for x, y, z in self.tour:
            buf.write(f"# tour {_fmt(float(x))} {_fmt(float(y))} {_fmt(float(z))}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_csv())
        except OSError as exc:
            raise OSError(f"cannot write run log {path}: {exc.strerror}") from exc
        return path

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        log = cls()
        goals, acc, tour = [], [], []
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    continue
                if parts[0] == "meta" and len(parts) >= 2:
                    log.meta[parts[1]] = " ".join(parts[2:])
                elif parts[0] == "goal":
                    g = [float(v) for v in parts[1:4]]
                    goals.append(g[:2])
                    acc.append(g[2])
                elif parts[0] == "tour":
                    tour.append([float(v) for v in parts[1:4]])
            elif line.strip():
                body.append(line)
        log.goals = np.array(goals, dtype=float).reshape(-1, 2)
        log.accuracy = np.array(acc, dtype=float)
        log.tour = np.array(tour, dtype=float).reshape(-1, 3)
        reader = csv.DictReader(body)
        if reader.fieldnames is None:
            raise ValueError("run log has no header row")
        if tuple(reader.fieldnames) != COLUMNS:
            raise ValueError("run log columns do not match this version")
        for r in reader:
            rec = {}
            for c in COLUMNS:
                v = r[c]
                rec[c] = v if c in STR_COLS else int(v) if c in INT_COLS else float(v)
            log.rows.append(rec)
        return log

    @classmethod
    def read(cls, path) -> "RunLog":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read run log {path}: {exc.strerror}") from exc
        return cls.from_csv(text)
