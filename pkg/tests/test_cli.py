import argparse
from pathlib import Path

import pytest

from hiernav.cli import main, parse_seeds
from hiernav.metrics import read_metrics_csv
from hiernav.runlog import RunLog

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
OPEN = str(SCENARIOS / "open_field.scn")
ARENA = str(SCENARIOS / "crowd_arena.scn")


def test_parse_seeds():
    assert parse_seeds("0-4,7") == [0, 1, 2, 3, 4, 7]
    assert parse_seeds("5") == [5]
    for bad in ["", "a", "4-2", "1-x", ","]:
        with pytest.raises(argparse.ArgumentTypeError):
            parse_seeds(bad)


def test_plan_writes_tour(tmp_path, capsys):
    assert main(["plan", "--scenario", OPEN, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "tour.txt").read_text().splitlines()
    assert len(lines) > 2
    assert [float(v) for v in lines[-1].split()[:2]] == pytest.approx([25.0, 10.0], abs=1e-6)
    assert "tour through goals [0]" in capsys.readouterr().out


def test_run_then_metrics(tmp_path):
    run_dir, met_dir = tmp_path / "run", tmp_path / "met"
    assert main(["run", "--scenario", ARENA, "--seed", "4", "--planner", "pf", "--duration", "3",
                 "--out", str(run_dir)]) == 0
    log = RunLog.read(run_dir / "runlog.csv")
    assert log.meta["seed"] == "4" and log.meta["planner"] == "pf"
    assert len(log) == 16
    assert main(["metrics", "--runlog", str(run_dir / "runlog.csv"), "--out", str(met_dir)]) == 0
    rows = read_metrics_csv((met_dir / "metrics.csv").read_text())
    assert any(r.metric == "stationary_s" for r in rows)
    assert (met_dir / "histogram.csv").read_text().startswith("bin_lo,bin_hi,count,percent\n")


def test_batch(tmp_path):
    assert main(["batch", "--scenario", ARENA, "--seeds", "0-1", "--planner", "fs", "--duration", "2",
                 "--out", str(tmp_path)]) == 0
    for s in (0, 1):
        assert (tmp_path / f"seed_{s}" / "runlog.csv").exists()
        assert (tmp_path / f"seed_{s}" / "tour.txt").exists()
    pooled = read_metrics_csv((tmp_path / "metrics.csv").read_text())
    assert [r.n for r in pooled if r.metric == "stationary_s"] == [2]


def test_run_is_reproducible_through_cli(tmp_path):
    for d in ("a", "b"):
        main(["run", "--scenario", ARENA, "--seed", "2", "--duration", "2", "--out", str(tmp_path / d)])
    assert (tmp_path / "a" / "runlog.csv").read_bytes() == (tmp_path / "b" / "runlog.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["batch", "--scenario", OPEN, "--seeds", "3-1", "--out", "x"],
    ["run", "--scenario", OPEN, "--duration", "-1", "--out", "x"],
    ["run", "--scenario", OPEN, "--planner", "rrt", "--out", "x"],
    ["run", "--out", "x"],
    [],
])
def test_usage_errors_exit_two(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("hiernav: error:")


def test_missing_scenario(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.scn"), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("hiernav: error:") and "nope.scn" in err and len(err.strip().splitlines()) == 1


def test_bad_scenario(tmp_path, capsys):
    p = tmp_path / "bad.scn"
    p.write_text("[world]\nbounds = 0 0 10 10\nstart = 1 1 0\n[goals]\n5 5 1\n")
    assert main(["plan", "--scenario", str(p), "--out", str(tmp_path)]) == 1
    assert "seed is mandatory" in capsys.readouterr().err


def test_empty_runlog(tmp_path, capsys):
    p = tmp_path / "runlog.csv"
    p.write_text(RunLog().to_csv())
    assert main(["metrics", "--runlog", str(p), "--out", str(tmp_path)]) == 1
    assert "no records" in capsys.readouterr().err


def test_output_path_is_a_file(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["plan", "--scenario", OPEN, "--out", str(blocker / "sub")]) == 1
    assert str(blocker / "sub") in capsys.readouterr().err
