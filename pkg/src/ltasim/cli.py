"""Command-line entry point.

Subcommands compose the library: `simulate` runs the executive loop and dumps
the log plus every report, `replay` rebuilds learned state from a log,
`metrics` recomputes reports from a log, `fremen-fit` fits a spectral model to
a CSV of timestamped binary observations, `validate-map` checks a map file,
and `compare` runs variant pairs over seed lists for side-by-side metrics.

Completed simulations exit 0 even when the robot had a bad month — failures
are data. Nonzero exits mean the inputs were unusable (bad config, bad log).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from ltasim.errors import ConfigError, LtaError


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(path: Path, data) -> None:
    _write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _state_dumps(out_dir: Path, stats, imodels, clusters) -> None:
    from ltasim.activity import clusters_to_dict

    _dump_json(out_dir / "edge_stats.json", stats.to_dict())
    _dump_json(out_dir / "interaction_models.json", imodels.to_dict())
    _dump_json(out_dir / "clusters.json",
               None if clusters is None else clusters_to_dict(clusters))


def _plan_csv(rows) -> str:
    lines = ["day,slot_start,node,weight,p_hat,entropy"]
    for day, slot, node, w, p, h in rows:
        lines.append(f"{day},{slot:.1f},{node},{w:.6f},{p:.6f},{h:.6f}")
    return "\n".join(lines) + "\n"


def _write_reports(out_dir: Path, records, windows, topo, constants) -> None:
    from ltasim import metrics

    report = metrics.compute_report(
        records, windows, topo,
        count_travel=constants.executive.count_travel_as_active,
        include_recovery=constants.executive.include_recovery_in_active,
    )
    _write(out_dir / "summary.txt", metrics.summary_text(report))
    _dump_json(out_dir / "report.json", dataclasses.asdict(report))
    _write(out_dir / "runs.csv",
           metrics.run_histogram_csv(metrics.segment_runs(records)))
    _write(out_dir / "recovery_table.csv", metrics.recovery_table_csv(records))
    _write(out_dir / "recovery_locations.csv",
           metrics.recovery_locations_csv(records))
    _write(out_dir / "timeline.csv", metrics.timeline_csv(records))
    _write(out_dir / "daily_a_percent.csv", metrics.daily_a_percent_csv(
        records, windows,
        count_travel=constants.executive.count_travel_as_active,
        include_recovery=constants.executive.include_recovery_in_active,
    ))
    _write(out_dir / "interactions_daily.csv",
           metrics.interactions_daily_csv(records))


def _load_scenario(args):
    from ltasim.config import load_scenario

    cfg = load_scenario(args.config)
    if getattr(args, "horizon_days", None):
        cfg = dataclasses.replace(cfg, horizon_days=args.horizon_days)
    return cfg


def cmd_simulate(args) -> int:
    from ltasim import metrics
    from ltasim.executive import Executive

    cfg = _load_scenario(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "events.jsonl"
    if log_path.exists():
        log_path.unlink()
    ex = Executive(cfg, seed=args.seed, variant=args.variant,
                   log_path=log_path, out_dir=out_dir)
    summary = ex.run()
    records = ex.store.records()
    windows = cfg.autonomy_windows()
    _write_reports(out_dir, records, windows, ex.topo, cfg.constants)
    _state_dumps(out_dir, ex.stats, ex.imodels, ex.clusters)
    _write(out_dir / "plan.csv", _plan_csv(ex.plan_rows))
    _dump_json(out_dir / "run_summary.json", summary)
    report = metrics.compute_report(records, windows, ex.topo)
    sys.stdout.write(metrics.summary_text(report))
    return 0


def cmd_replay(args) -> int:
    from ltasim.events import read_log, replay

    cfg = _load_scenario(args)
    records = read_log(args.log)
    state = replay(records, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _state_dumps(out_dir, state.edge_stats, state.interaction_models,
                 state.clusters)
    print(f"replayed {len(records)} records: "
          f"{state.trajectory_count} trajectories, "
          f"{state.feature_count} encoded features")
    return 0


def cmd_metrics(args) -> int:
    from ltasim import metrics
    from ltasim.events import read_log

    cfg = _load_scenario(args)
    records = read_log(args.log)
    topo = cfg.load_topomap()
    windows = cfg.autonomy_windows()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_reports(out_dir, records, windows, topo, cfg.constants)
    report = metrics.compute_report(records, windows, topo)
    sys.stdout.write(metrics.summary_text(report))
    return 0


def cmd_fremen_fit(args) -> int:
    from ltasim.fremen import FremenModel

    periods_s = None
    if args.periods_h:
        periods_s = [float(h) * 3600.0 for h in args.periods_h.split(",")]
    model = FremenModel(periods_s=periods_s) if periods_s else FremenModel()

    times, states = [], []
    with open(args.input, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                t = float(row[0])
            except ValueError:
                continue  # header row
            times.append(t)
            states.append(int(float(row[1])))
    if not times:
        print(f"no observations found in {args.input}", file=sys.stderr)
        return 2
    model.add_observations(times, states)
    model.rebuild()
    _write(Path(args.out), model.to_json() + "\n")
    lines = ["period_h,amplitude"]
    for period_s, amp in model.spectrum():
        lines.append(f"{period_s / 3600.0:g},{amp:.6f}")
    _write(Path(args.spectrum), "\n".join(lines) + "\n")
    import math

    desc = ", ".join(
        f"{(2.0 * math.pi / omega) / 3600.0:g} h (amp {2.0 * abs(gamma):.3f})"
        for omega, gamma in model.retained_components())
    print(f"fitted {len(times)} observations; retained: {desc}")
    return 0


def cmd_validate_map(args) -> int:
    from ltasim.errors import MapValidationError
    from ltasim.topomap import load_map

    try:
        topo = load_map(args.map)
    except MapValidationError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    print(f"ok: {len(topo.nodes)} nodes, {len(topo.edges)} edges")
    return 0


def cmd_compare(args) -> int:
    from ltasim import metrics
    from ltasim.config import VARIANTS
    from ltasim.executive import Executive

    cfg = _load_scenario(args)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if len(variants) < 2:
        print("compare needs at least two variants", file=sys.stderr)
        return 2
    for v in variants:
        if v not in VARIANTS:
            print(f"unknown variant {v!r} (choose from {', '.join(VARIANTS)})",
                  file=sys.stderr)
            return 2

    lines = ["seed,variant,nav_failures,interactions_per_day,a_percent,"
             "distance_km,tasks_completed"]
    windows = cfg.autonomy_windows()
    for seed in seeds:
        for variant in variants:
            ex = Executive(cfg, seed=seed, variant=variant)
            summary = ex.run()
            records = ex.store.records()
            inter = sum(n for _, _, n in metrics.interactions_daily_rows(records))
            lines.append(
                f"{seed},{variant},{summary['nav_failures']},"
                f"{inter / cfg.horizon_days:.4f},"
                f"{metrics.a_percent(records, windows):.2f},"
                f"{metrics.distance_m(records, ex.topo) / 1000.0:.4f},"
                f"{metrics.tasks_completed(records)}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltasim",
        description="Long-term service-robot autonomy simulator and analysis tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario to its horizon")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--horizon-days", type=int, default=None)
    p.add_argument("--variant", default=None,
                   choices=("adaptive", "static_nav", "uniform_info"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="rebuild learned state from a log")
    p.add_argument("--config", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--horizon-days", type=int, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics", help="compute reports from a log")
    p.add_argument("--config", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--horizon-days", type=int, default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fremen-fit",
                       help="fit a spectral model to a (t_seconds,state) CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="model.json")
    p.add_argument("--spectrum", default="spectrum.csv")
    p.add_argument("--periods-h", default=None,
                   help="comma-separated candidate periods in hours")
    p.set_defaults(func=cmd_fremen_fit)

    p = sub.add_parser("validate-map", help="validate a topological map file")
    p.add_argument("map")
    p.set_defaults(func=cmd_validate_map)

    p = sub.add_parser("compare",
                       help="run variants over seeds and tabulate metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True,
                   help="comma-separated seed list")
    p.add_argument("--variants", default="adaptive,static_nav")
    p.add_argument("--out", default=None)
    p.add_argument("--horizon-days", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except LtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
