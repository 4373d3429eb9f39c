"""Command-line surface: artifacts on disk, exit codes, error reporting."""
from __future__ import annotations

import json
import re
import shutil
import subprocess

import pytest

from ltasim.cli import main
from ltasim.fremen import FremenModel
from ltasim.topomap import TopoMap, save_map

from conftest import make_edge, make_node, write_scenario

REPORT_FILES = (
    "summary.txt", "report.json", "runs.csv", "recovery_table.csv",
    "recovery_locations.csv", "timeline.csv", "daily_a_percent.csv",
    "interactions_daily.csv",
)
STATE_FILES = ("edge_stats.json", "interaction_models.json", "clusters.json")


def make_scenario(tmp_path, doc=None):
    """Small dock--a--b world with an information terminal at `a`."""
    topo = TopoMap(
        [
            make_node("dock", 0, 0, tags=("dock",)),
            make_node("a", 10, 0, tags=("terminal_spot",)),
            make_node("b", 20, 0),
        ],
        [
            make_edge("e-dock-a", "dock", "a", action="undock"),
            make_edge("e-a-dock", "a", "dock", action="dock"),
            make_edge("e-a-b", "a", "b"),
            make_edge("e-b-a", "b", "a"),
        ],
    )
    save_map(topo, tmp_path / "map.json")
    base = {
        "map": "map.json",
        "seed": 7,
        "horizon_days": 1,
        "autonomy_window_h": [8.0, 18.0],
        "tasks": [
            {"id": "patrol", "kind": "patrol_check", "node": "b",
             "max_duration_s": 300.0, "window_h": [9.0, 11.0]},
        ],
        "world": {
            "duration_sigma": 0.0,
            "battery_drain_h": 1000.0,
            "interaction_propensity": {"a": {"base": 0.6}},
        },
    }
    for key, value in (doc or {}).items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = {**base[key], **value}
        else:
            base[key] = value
    return write_scenario(tmp_path, base)


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_full_artifact_set(tmp_path, capsys):
    cfg = make_scenario(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0

    stdout = capsys.readouterr().out
    assert "Total Distance Travelled" in stdout
    assert "Autonomy Percentage (A%)" in stdout

    for name in ("events.jsonl", "plan.csv", "run_summary.json",
                 *REPORT_FILES, *STATE_FILES):
        assert (out / name).exists(), name

    first = json.loads((out / "events.jsonl").read_text().splitlines()[0])
    assert first["category"] == "run_marker"
    assert first["payload"]["marker"] == "start"

    headers = {
        "runs.csv": "run,start_s,end_s,length_s,termination",
        "recovery_table.csv":
            "failure_class,behavior,successful,unsuccessful,total",
        "recovery_locations.csv":
            "t,edge,x,y,failure_class,behavior,immediate_success",
        "timeline.csv": "t_start,t_end,task_id,state",
        "daily_a_percent.csv": "day,a_percent",
        "interactions_daily.csv": "day,visits,interactions",
        "plan.csv": "day,slot_start,node,weight,p_hat,entropy",
    }
    for name, header in headers.items():
        assert (out / name).read_text().splitlines()[0] == header, name

    report = json.loads((out / "report.json").read_text())
    assert set(report) == {
        "max_tsl_s", "cumulative_tsl_s", "run_count", "a_percent",
        "distance_km", "tasks_completed", "run_lengths_s"}
    assert report["run_count"] == 1

    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seed"] == 7
    assert summary["variant"] == "adaptive"
    assert summary["horizon_days"] == 1
    assert summary["runs"] == 1
    assert "nav_failures" in summary and "task_states" in summary

    # six visits planned at the single terminal
    assert len((out / "plan.csv").read_text().splitlines()) == 7
    # no nightly learning task, so no cluster model
    assert json.loads((out / "clusters.json").read_text()) is None
    assert json.loads((out / "edge_stats.json").read_text())


def test_simulate_flag_overrides(tmp_path):
    cfg = make_scenario(tmp_path)
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(cfg), "--out", str(out),
               "--seed", "3", "--variant", "static_nav",
               "--horizon-days", "2"])
    assert rc == 0
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seed"] == 3
    assert summary["variant"] == "static_nav"
    assert summary["horizon_days"] == 2


def test_simulate_reruns_byte_identical(tmp_path):
    cfg = make_scenario(tmp_path)
    one, two = tmp_path / "one", tmp_path / "two"
    assert main(["simulate", "--config", str(cfg), "--out", str(one)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(two)]) == 0
    assert (one / "events.jsonl").read_bytes() == (two / "events.jsonl").read_bytes()

    # rerunning into the same directory replaces the log instead of appending
    assert main(["simulate", "--config", str(cfg), "--out", str(one)]) == 0
    assert (one / "events.jsonl").read_bytes() == (two / "events.jsonl").read_bytes()


# ---------------------------------------------------------------------------
# replay and metrics over an existing log


def test_replay_rebuilds_identical_state(tmp_path, capsys):
    cfg = make_scenario(tmp_path)
    out = tmp_path / "out"
    main(["simulate", "--config", str(cfg), "--out", str(out)])
    capsys.readouterr()

    rep = tmp_path / "rep"
    rc = main(["replay", "--config", str(cfg),
               "--log", str(out / "events.jsonl"), "--out", str(rep)])
    assert rc == 0
    assert re.fullmatch(
        r"replayed \d+ records: \d+ trajectories, \d+ encoded features\n",
        capsys.readouterr().out)
    for name in STATE_FILES:
        assert json.loads((rep / name).read_text()) == \
            json.loads((out / name).read_text()), name


def test_metrics_recomputes_reports(tmp_path, capsys):
    cfg = make_scenario(tmp_path)
    out = tmp_path / "out"
    main(["simulate", "--config", str(cfg), "--out", str(out)])
    simulate_stdout = capsys.readouterr().out

    met = tmp_path / "met"
    rc = main(["metrics", "--config", str(cfg),
               "--log", str(out / "events.jsonl"), "--out", str(met)])
    assert rc == 0
    assert capsys.readouterr().out == simulate_stdout
    for name in REPORT_FILES:
        assert (met / name).read_text() == (out / name).read_text(), name


# ---------------------------------------------------------------------------
# fremen-fit


def write_square_wave_csv(path, days=14):
    lines = ["t,state"]
    for hour in range(days * 24):
        state = 1 if hour % 24 < 12 else 0
        lines.append(f"{hour * 3600.0},{state}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_fremen_fit_recovers_daily_rhythm(tmp_path, capsys):
    csv_path = tmp_path / "door.csv"
    write_square_wave_csv(csv_path)
    model_path = tmp_path / "model.json"
    spec_path = tmp_path / "spectrum.csv"
    rc = main(["fremen-fit", "--input", str(csv_path),
               "--out", str(model_path), "--spectrum", str(spec_path)])
    assert rc == 0

    stdout = capsys.readouterr().out
    assert stdout.startswith("fitted 336 observations; retained:")
    assert "24 h" in stdout

    model = FremenModel.from_json(model_path.read_text())
    model.rebuild()
    assert model.predict(6 * 3600.0).p > 0.7    # mid-morning: open
    assert model.predict(18 * 3600.0).p < 0.3   # evening: closed

    spectrum = spec_path.read_text().splitlines()
    assert spectrum[0] == "period_h,amplitude"
    assert len(spectrum) == 15                  # fourteen candidate periods


def test_fremen_fit_custom_periods(tmp_path):
    csv_path = tmp_path / "door.csv"
    write_square_wave_csv(csv_path)
    spec_path = tmp_path / "spectrum.csv"
    rc = main(["fremen-fit", "--input", str(csv_path),
               "--out", str(tmp_path / "model.json"),
               "--spectrum", str(spec_path), "--periods-h", "12,24"])
    assert rc == 0
    assert len(spec_path.read_text().splitlines()) == 3


def test_fremen_fit_rejects_empty_input(tmp_path, capsys):
    csv_path = tmp_path / "empty.csv"
    csv_path.write_text("t,state\n", encoding="utf-8")
    rc = main(["fremen-fit", "--input", str(csv_path),
               "--out", str(tmp_path / "model.json"),
               "--spectrum", str(tmp_path / "spectrum.csv")])
    assert rc == 2
    assert "no observations found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# validate-map


def test_validate_map_accepts_good_map(tmp_path, capsys):
    make_scenario(tmp_path)
    assert main(["validate-map", str(tmp_path / "map.json")]) == 0
    assert capsys.readouterr().out == "ok: 3 nodes, 4 edges\n"


def test_validate_map_reports_problems(tmp_path, capsys):
    make_scenario(tmp_path)
    doc = json.loads((tmp_path / "map.json").read_text())
    for node in doc["nodes"]:
        node["tags"] = [t for t in node["tags"] if t != "dock"]
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc), encoding="utf-8")

    assert main(["validate-map", str(broken)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("invalid:")
    assert "dock" in err


# ---------------------------------------------------------------------------
# compare


def test_compare_tabulates_seed_variant_grid(tmp_path):
    cfg = make_scenario(tmp_path)
    table = tmp_path / "cmp.csv"
    rc = main(["compare", "--config", str(cfg), "--seeds", "1,2",
               "--variants", "adaptive,static_nav", "--out", str(table)])
    assert rc == 0
    lines = table.read_text().splitlines()
    assert lines[0] == ("seed,variant,nav_failures,interactions_per_day,"
                        "a_percent,distance_km,tasks_completed")
    assert len(lines) == 5
    assert [line.split(",")[:2] for line in lines[1:]] == [
        ["1", "adaptive"], ["1", "static_nav"],
        ["2", "adaptive"], ["2", "static_nav"]]
    for line in lines[1:]:
        assert len(line.split(",")) == 7


def test_compare_prints_to_stdout_without_out(tmp_path, capsys):
    cfg = make_scenario(tmp_path)
    rc = main(["compare", "--config", str(cfg), "--seeds", "1",
               "--variants", "adaptive,uniform_info"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("seed,variant,")
    assert len(stdout.splitlines()) == 3


def test_compare_argument_validation(tmp_path, capsys):
    cfg = make_scenario(tmp_path)
    assert main(["compare", "--config", str(cfg), "--seeds", "1",
                 "--variants", "adaptive"]) == 2
    assert "at least two variants" in capsys.readouterr().err

    assert main(["compare", "--config", str(cfg), "--seeds", "1",
                 "--variants", "adaptive,bogus"]) == 2
    assert "unknown variant 'bogus'" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# error handling and packaging


def test_config_problems_exit_two(tmp_path, capsys):
    path = write_scenario(tmp_path, {"variant": "bogus", "extra": 1})
    rc = main(["simulate", "--config", str(path), "--out",
               str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "config error: map: required" in err
    assert "config error: unknown key extra" in err
    assert "config error: variant: unknown variant 'bogus'" in err


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])          # missing --config
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("ltasim") is None,
                    reason="console script not on PATH")
def test_console_script_entry_point(tmp_path):
    make_scenario(tmp_path)
    proc = subprocess.run(["ltasim", "validate-map", str(tmp_path / "map.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == "ok: 3 nodes, 4 edges\n"
