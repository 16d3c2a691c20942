"""Command-line entry point.

Exit codes: 0 success, 1 config/validation error, 2 infeasibility, 3 IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import sim
from .config import load_config
from .direct import direct_run, write_aggregate, write_profile
from .dispatch import dispatch, write_schedule
from .errors import GridShiftError, InfeasibleError, ValidationError
from .green import green_run
from .grid import load_fleet, load_series, low_generation_stats, marginal_emission_curve
from .sessions import HORIZON_HOURS, ScenarioSpec, load_catalog, sample_sessions, write_sessions

log = logging.getLogger("gridshift")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file (default: $GRIDSHIFT_CONFIG)")
    p.add_argument("--scenario", choices=("day", "night"))
    p.add_argument("--scheme", choices=("direct", "emission"))
    p.add_argument("--backend", choices=("dp", "exact"))
    p.add_argument("--delta-mwh", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--threshold-mw", type=float)
    p.add_argument("--n-vehicles", type=int)
    p.add_argument("--start-date", type=date.fromisoformat)
    p.add_argument("--end-date", type=date.fromisoformat)
    p.add_argument("--jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridshift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sessions", help="sample charging sessions for one scenario")
    _common(p)
    p.add_argument("--date", type=date.fromisoformat,
                   help="derive the seed exactly as the year runner does for this date")
    p.set_defaults(func=cmd_gen_sessions)

    p = sub.add_parser("analyze-load", help="low-generation-hour statistics of the net load")
    _common(p)
    p.set_defaults(func=cmd_analyze_load)

    p = sub.add_parser("simulate", help="run one or both schemes over the configured dates")
    _common(p)
    p.add_argument("--date", type=date.fromisoformat,
                   help="single day; also writes schedules and per-vehicle profiles")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run both schemes, summarize and write reports")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="rebuild reports from an existing results directory")
    _common(p)
    p.add_argument("--results", type=Path, help="directory holding daily_results.csv (default: --out)")
    p.set_defaults(func=cmd_report)
    return parser


def _config(args):
    overrides = {
        "backend": args.backend,
        "delta_mwh": args.delta_mwh,
        "seed": args.seed,
        "output_dir": args.out,
        "threshold_mw": args.threshold_mw,
        "n_vehicles": args.n_vehicles,
        "start_date": args.start_date,
        "end_date": args.end_date,
        "jobs": args.jobs,
    }
    if args.scenario:
        overrides["scenarios"] = (args.scenario,)
    if args.scheme:
        overrides["schemes"] = (args.scheme,)
    return load_config(args.config, overrides)


def cmd_gen_sessions(args) -> int:
    cfg = _config(args).validate(need=())
    catalog = load_catalog(cfg.catalog_path)
    scenario = cfg.scenarios[0] if args.scenario is None else args.scenario
    if args.date is not None:
        sessions = sim.sessions_for(catalog, cfg.n_vehicles, cfg.seed, args.date, scenario)
    else:
        sessions = sample_sessions(catalog, ScenarioSpec(scenario, cfg.n_vehicles, seed=cfg.seed))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / f"sessions_{scenario}.csv"
    write_sessions(sessions, path)
    total = sum(s.energy_request for s in sessions)
    print(f"wrote {len(sessions)} sessions ({total:.3f} MWh) to {path}")
    return 0


def cmd_analyze_load(args) -> int:
    cfg = _config(args).validate(need=("load_path",))
    report = low_generation_stats(load_series(cfg.load_path), cfg.threshold_mw, cfg.day_window)
    payload = report.as_dict()
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out is not None:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        sim.atomic_write(cfg.output_dir / "load_stats.json", text + "\n")
        if cfg.fleet_path is not None and Path(cfg.fleet_path).exists():
            curve = marginal_emission_curve(load_fleet(cfg.fleet_path))
            sim.atomic_write(
                cfg.output_dir / "emission_curve.csv",
                sim._csv_text(("cumulative_capacity_mw", "marginal_emission_rate"),
                              [(repr(p.cumulative_capacity_mw), repr(p.marginal_emission_rate)) for p in curve]),
            )
    return 0


def _simulate_day(cfg, day: date) -> int:
    fleet = load_fleet(cfg.fleet_path)
    series = load_series(cfg.load_path)
    catalog = load_catalog(cfg.catalog_path)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for scenario in cfg.scenarios:
        start = sim.horizon_start(day, scenario)
        L = series.window(start, HORIZON_HOURS)
        sessions = sim.sessions_for(catalog, cfg.n_vehicles, cfg.seed, day, scenario)
        write_sessions(sessions, out / f"sessions_{scenario}.csv")
        base = dispatch(fleet, L)
        for scheme in cfg.schemes:
            tag = f"{scenario}_{scheme}"
            if scheme == "direct":
                schedule, profile = direct_run(fleet, L, sessions)
                residual, backend, delta = 0.0, None, None
                write_aggregate(profile.aggregate, out / f"aggregate_{tag}.csv", hour_offset=start.hour)
            else:
                sol = green_run(fleet, L, sessions, cfg.backend, cfg.delta_mwh)
                schedule, profile = sol.schedule, sol.profile
                residual, backend, delta = sol.dispersal_residual, cfg.backend, cfg.delta_mwh
                write_aggregate(sol.aggregate, out / f"aggregate_{tag}.csv", column="g_star_mwh",
                                hour_offset=start.hour)
            write_schedule(fleet, schedule, out / f"schedule_{tag}.csv", hour_offset=start.hour)
            write_profile(profile, out / f"profile_{tag}.csv", hour_offset=start.hour)
            records.append({
                "day": day.isoformat(), "scheme": scheme, "scenario": scenario,
                "emissions_ton": schedule.total_emissions - base.total_emissions,
                "cost": schedule.total_cost - base.total_cost,
                "residual_mwh": residual, "backend": backend, "delta_mwh": delta,
            })
    sim.atomic_write(out / "runs.jsonl", "".join(json.dumps(r) + "\n" for r in records))
    for r in records:
        print(f"{r['scenario']:>5} {r['scheme']:>8}: {r['emissions_ton']:.3f} ton, residual {r['residual_mwh']:.3g} MWh")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args).validate()
    if args.date is not None:
        return _simulate_day(cfg, args.date)
    failures = []
    results = sim.run_year(cfg, failures)
    sim.write_results(results, cfg.output_dir, failures)
    print(f"{len(results)} daily results, {len(failures)} skipped (date, scenario) units -> {cfg.output_dir}")
    return 0


def _report(cfg, results, failures=()):
    summary = sim.summarize(results, cfg.significance_ton, cfg.histogram_bin_pct)
    sim.emit_reports(summary, results, cfg.output_dir)
    sim.write_failures(failures, cfg.output_dir)
    print(json.dumps(summary.to_json(), indent=2))
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    cfg = replace(cfg, schemes=("direct", "emission")).validate()
    failures = []
    results = sim.run_year(cfg, failures)
    return _report(cfg, results, failures)


def cmd_report(args) -> int:
    cfg = _config(args).validate(need=())
    src = args.results or cfg.output_dir
    return _report(cfg, sim.read_results(src))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GridShiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
