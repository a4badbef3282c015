"""Run metrics: clearance histogram, J/m and velocity toward the goal, deviation.

Density buckets are the maximum number of confirmed tracks within 8 m during
a 1 s window (per tick for deviation), capped at 5. Windows that contain
waypoint dwell are left out of the J/m and velocity tables.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import windows
from .executive import FRAMEWORK_RADIUS
from .runlog import RunLog

ROBOT_RADIUS = 1.5
BIN_WIDTH = 0.25
HIST_MAX = FRAMEWORK_RADIUS - ROBOT_RADIUS  # surface distance of an agent at the 8 m limit
MAX_BUCKET = 5
STATIONARY_SPEED = 0.05  # m/s
METRIC_COLUMNS = ("metric", "bucket", "median", "q1", "q3", "n")
HIST_COLUMNS = ("bin_lo", "bin_hi", "count", "percent")


@dataclass(frozen=True)
class MetricRow:
    metric: str
    bucket: str
    median: float
    q1: float
    q3: float
    n: int


@dataclass
class MetricsReport:
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    samples: dict = field(default_factory=dict)  # (metric, bucket) -> list of values
    stationary_s: float = 0.0
    total_energy: float = 0.0

    @property
    def hist_percent(self) -> np.ndarray:
        total = self.hist_counts.sum()
        if total == 0:
            return np.zeros(len(self.hist_counts))
        return 100.0 * self.hist_counts / total

    def rows(self) -> list[MetricRow]:
        out = []
        for (metric, bucket), vals in sorted(self.samples.items()):
            v = np.asarray(vals, dtype=float)
            if not len(v):
                continue
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            out.append(MetricRow(metric, str(bucket), float(med), float(q1), float(q3), len(v)))
        return out

    def median(self, metric: str, bucket) -> float:
        vals = self.samples.get((metric, str(bucket)), [])
        return float(np.median(vals)) if len(vals) else float("nan")


def _bucket(n) -> str:
    return str(int(min(n, MAX_BUCKET)))


def clearance_histogram(log: RunLog, robot_radius: float = ROBOT_RADIUS):
    """Counts of the closest agent's surface distance over ticks with an agent within 8 m."""
    edges = np.arange(0.0, HIST_MAX + BIN_WIDTH / 2, BIN_WIDTH)
    counts = np.zeros(len(edges) - 1, dtype=int)
    xs, ys = log.x, log.y
    for k in range(len(log)):
        pts = log.agent_positions(k)
        if not len(pts):
            continue
        d = float(np.min(np.hypot(pts[:, 0] - xs[k], pts[:, 1] - ys[k])))
        if d > FRAMEWORK_RADIUS:
            continue
        surf = d - robot_radius
        i = int(np.clip(np.floor(surf / BIN_WIDTH + 1e-9), 0, len(counts) - 1))
        counts[i] += 1
    return edges, counts


def compute_metrics(log: RunLog, goals=None, reference=None) -> MetricsReport:
    """Metrics of one run. ``reference`` overrides the deviation logged per tick."""
    if len(log) == 0:
        raise ValueError("run log is empty")
    edges, counts = clearance_histogram(log)
    samples: dict = {}
    dwell = log.dwell
    t = log.t
    goal = None if goals is None or np.asarray(goals).size != 2 else np.asarray(goals, dtype=float)
    wins = windows(log, 1.0, goal)
    lo = 1
    per = max(1, int(round(1.0 / float(np.median(np.diff(t)))))) if len(t) > 1 else 1
    for w in wins:
        hi = min(lo + per, len(t))
        if not dwell[lo:hi].any():
            samples.setdefault(("j_per_m", str(w.bucket)), []).append(w.joules_per_metre)
            samples.setdefault(("velocity", str(w.bucket)), []).append(w.velocity)
        lo = hi
    if reference is not None:
        dev = np.array([reference.deviation((x, y)) for x, y in zip(log.x, log.y)])
    else:
        dev = log.deviation
    for d, n in zip(dev, log.n_detected):
        samples.setdefault(("deviation", _bucket(n)), []).append(float(d))
    dt = np.diff(t, prepend=t[0])
    stationary = float(np.sum(dt[log.speed < STATIONARY_SPEED]))
    samples[("stationary_s", "all")] = [stationary]
    return MetricsReport(edges, counts, samples, stationary, float(np.sum(log.energy)))


def pool(reports) -> MetricsReport:
    """Combine reports from several runs: samples concatenated, histograms summed."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to pool")
    samples: dict = {}
    for r in reports:
        for k, v in r.samples.items():
            samples.setdefault(k, []).extend(v)
    counts = np.sum([r.hist_counts for r in reports], axis=0)
    return MetricsReport(reports[0].hist_edges, counts, samples,
                         sum(r.stationary_s for r in reports), sum(r.total_energy for r in reports))


# --- CSV export ---

def _num(v: float) -> str:
    return repr(float(v))


def metrics_csv(report: MetricsReport | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in report.rows() if report is not None else ():
        w.writerow([r.metric, r.bucket, _num(r.median), _num(r.q1), _num(r.q3), r.n])
    return buf.getvalue()


def histogram_csv(report: MetricsReport | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HIST_COLUMNS)
    if report is not None and report.hist_counts.sum() > 0:
        pct = report.hist_percent
        for k, c in enumerate(report.hist_counts):
            if c:
                w.writerow([f"{report.hist_edges[k]:.2f}", f"{report.hist_edges[k + 1]:.2f}", int(c), _num(pct[k])])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[MetricRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != METRIC_COLUMNS:
        raise ValueError("not a metrics table")
    return [MetricRow(r["metric"], r["bucket"], float(r["median"]), float(r["q1"]), float(r["q3"]), int(r["n"]))
            for r in reader]


def tour_text(polyline) -> str:
    pts = np.asarray(polyline, dtype=float).reshape(-1, 3)
    return "".join(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in pts)


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def export(report: MetricsReport | None, log: RunLog | None, out_dir) -> list[Path]:
    """Write metrics.csv and histogram.csv, plus runlog.csv and tour.txt when a log is given."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = [_write(out / "metrics.csv", metrics_csv(report)), _write(out / "histogram.csv", histogram_csv(report))]
    if log is not None:
        written.append(log.write(out / "runlog.csv"))
        written.append(_write(out / "tour.txt", tour_text(log.tour)))
    return written
