"""Command line: plan a tour, run a scenario, compute metrics, run seed batches.

    hiernav plan    --scenario S.scn --out DIR              -> DIR/tour.txt
    hiernav run     --scenario S.scn --seed 3 --out DIR     -> DIR/runlog.csv
    hiernav metrics --runlog DIR/runlog.csv --out DIR       -> metrics.csv, histogram.csv
    hiernav batch   --scenario S.scn --seeds 0-19 --out DIR -> one run per seed plus pooled metrics

Errors print a single ``hiernav: error: ...`` line and exit with status 1
(2 for command line mistakes).
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .metrics import compute_metrics, export, histogram_csv, metrics_csv, pool, tour_text
from .runlog import RunLog
from .scenario import PLANNERS, ScenarioError, load_scenario
from .sim import plan_offline, run_scenario


def parse_seeds(text: str) -> list[int]:
    """``"0-4,7"`` -> ``[0, 1, 2, 3, 4, 7]``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return conv


def _load(args):
    sc = load_scenario(args.scenario)
    return sc.with_overrides(planner=getattr(args, "planner", None), seed=getattr(args, "seed", None),
                             duration=getattr(args, "duration", None),
                             budget_iters=getattr(args, "budget_iters", None))


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def cmd_plan(args) -> int:
    sc = _load(args)
    offline = plan_offline(sc)
    out = _out_dir(args.out) / "tour.txt"
    try:
        out.write_text(tour_text(offline.tour.polyline))
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror}") from exc
    order = " ".join(str(i) for i in offline.order)
    print(f"tour through goals [{order}], {offline.reference.length:.1f} m, "
          f"{offline.tour.energy:.0f} J -> {out}")
    return 0


def cmd_run(args) -> int:
    sc = _load(args)
    log = run_scenario(sc)
    out = log.write(_out_dir(args.out) / "runlog.csv")
    print(f"{len(log) - 1} ticks, finished={log.meta['finished']} -> {out}")
    return 0


def cmd_metrics(args) -> int:
    log = RunLog.read(args.runlog)
    if len(log) == 0:
        raise ValueError(f"run log {args.runlog} has no records")
    report = compute_metrics(log)
    written = export(report, None, _out_dir(args.out))
    print(" ".join(str(p) for p in written))
    return 0


def _batch_one(job):
    path, planner, seed, duration, budget, out = job
    sc = load_scenario(path).with_overrides(planner=planner, seed=seed, duration=duration, budget_iters=budget)
    log = run_scenario(sc)
    report = compute_metrics(log)
    export(report, log, out)
    return report


def cmd_batch(args) -> int:
    sc = _load(args)  # validate once before fanning out
    out = _out_dir(args.out)
    jobs = [(args.scenario, sc.planner.planner, seed, sc.run.duration, sc.planner.budget_iters,
             out / f"seed_{seed}") for seed in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            reports = list(ex.map(_batch_one, jobs))
    else:
        reports = [_batch_one(j) for j in jobs]
    pooled = pool(reports)
    for name, text in (("metrics.csv", metrics_csv(pooled)), ("histogram.csv", histogram_csv(pooled))):
        try:
            (out / name).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {out / name}: {exc.strerror}") from exc
    print(f"{len(reports)} runs ({sc.planner.planner}) -> {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    """Usage mistakes get the same one-line report as runtime errors."""

    def error(self, message):
        sub = self.prog.partition(" ")[2]
        self.exit(2, f"hiernav: error: {sub + ': ' if sub else ''}{message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hiernav", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log planner warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, seed_flag=True):
        sp.add_argument("--scenario", required=True, help="scenario file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--planner", choices=PLANNERS, help="override the scenario's planner")
        if seed_flag:
            sp.add_argument("--seed", type=int, help="override the scenario's seed")
        sp.add_argument("--duration", type=_positive(float), help="run length in seconds")
        sp.add_argument("--budget-iters", type=_positive(int), help="MCTS iterations per plan")

    sp = sub.add_parser("plan", help="plan the offline tour and write tour.txt")
    scenario_args(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("run", help="simulate one seeded run and write runlog.csv")
    scenario_args(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("metrics", help="compute metrics.csv and histogram.csv from a run log")
    sp.add_argument("--runlog", required=True, help="runlog.csv written by 'run'")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("batch", help="run a scenario over a list of seeds and pool the metrics")
    scenario_args(sp, seed_flag=False)
    sp.add_argument("--seeds", type=parse_seeds, required=True, help="e.g. 0-19 or 1,4,9")
    sp.add_argument("--jobs", type=_positive(int), default=1, help="worker processes (default 1)")
    sp.set_defaults(func=cmd_batch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"hiernav: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the one-line contract for anything unexpected
        print(f"hiernav: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
