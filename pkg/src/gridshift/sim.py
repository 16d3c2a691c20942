"""Year sweep over weekdays x scenarios x schemes, and the comparison reports.

Reported emissions and cost are those attributable to EV charging: the day's
dispatch with EV demand minus the same horizon dispatched on net load alone.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig
from .direct import direct_run
from .dispatch import dispatch
from .errors import DataError, GridShiftError, InfeasibleError
from .green import green_run
from .grid import Fleet, LoadSeries, load_fleet, load_series
from .sessions import (
    HORIZON_HOURS,
    ScenarioKind,
    ScenarioSpec,
    load_catalog,
    resample_windows,
    sample_sessions,
)

log = logging.getLogger(__name__)

DAILY_COLUMNS = ("date", "scenario", "scheme", "emissions_ton", "cost", "residual_mwh")
PROFILE_COLUMNS = ("date", "scenario", "scheme", "hour", "aggregate_mwh")
HISTOGRAM_COLUMNS = ("bin_left_pct", "bin_right_pct", "count", "scenario")
MODE_BIN_TON = 10.0


@dataclass(frozen=True)
class DailyResult:
    date: date
    scenario: str
    scheme: str
    emissions_ton: float
    cost: float
    residual_mwh: float
    aggregate_profile: tuple[float, ...]
    horizon_start_hour: int = 0
    backend: str | None = None
    delta_mwh: float | None = None

    def hour_labels(self) -> list[int]:
        return [(self.horizon_start_hour + i) % 24 for i in range(len(self.aggregate_profile))]


@dataclass(frozen=True)
class DayFailure:
    date: date
    scenario: str
    error: str
    infeasible: bool


@dataclass(frozen=True)
class ComparisonSummary:
    mean_savings_pct_day: float | None
    mean_savings_pct_night: float | None
    significant_fraction: float
    n_days: int
    threshold_ton: float
    n_significant: int = 0
    histogram: tuple[tuple[float, float, int, str], ...] = ()
    mean_profiles: dict = field(default_factory=dict)
    mode_emissions_ton: dict = field(default_factory=dict)
    savings_pct: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mean_savings_pct_day": self.mean_savings_pct_day,
            "mean_savings_pct_night": self.mean_savings_pct_night,
            "significant_fraction": self.significant_fraction,
            "n_days": self.n_days,
            "threshold_ton": self.threshold_ton,
            "n_significant": self.n_significant,
            "mode_emissions_ton": {k: self.mode_emissions_ton[k] for k in sorted(self.mode_emissions_ton)},
        }


def day_seed(seed: int, day: date, stream: int = 0) -> int:
    """Per-date RNG seed, stable across runs and platforms."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, day.toordinal(), stream])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _base_sessions(catalog, n_vehicles, seed, day):
    return sample_sessions(catalog, ScenarioSpec(ScenarioKind.DAY, n_vehicles, seed=day_seed(seed, day, 0)))


def _for_scenario(base, n_vehicles, seed, day, scenario):
    if scenario == "day":
        return base
    spec = ScenarioSpec(ScenarioKind.NIGHT, n_vehicles, seed=day_seed(seed, day, 1))
    return resample_windows(base, spec)


def sessions_for(catalog, n_vehicles: int, seed: int, day: date, scenario: str):
    """The day's vehicles; night scenarios reuse them with night windows."""
    base = _base_sessions(catalog, n_vehicles, seed, day)
    return _for_scenario(base, n_vehicles, seed, day, scenario)


def horizon_start(day: date, scenario: str) -> datetime:
    spec = ScenarioSpec(ScenarioKind(scenario), 0)
    return datetime.combine(day, time(hour=spec.horizon_start_hour))


class _Context:
    def __init__(self, config: RunConfig):
        self.config = config
        self.fleet: Fleet = load_fleet(config.fleet_path)
        self.load: LoadSeries = load_series(config.load_path)
        self.catalog = load_catalog(config.catalog_path)


_WORKER_CTX: _Context | None = None


def _init_worker(config):
    global _WORKER_CTX
    _WORKER_CTX = _Context(config)


def run_day(ctx: _Context, day: date):
    """All configured (scenario, scheme) results for one date.

    A scenario whose horizon is not covered, or whose dispatch fails, is
    recorded as a failure and dropped with both of its schemes.
    """
    cfg = ctx.config
    results, failures = [], []
    base_sessions = None
    for scenario in cfg.scenarios:
        start = horizon_start(day, scenario)
        try:
            L = ctx.load.window(start, HORIZON_HOURS)
            if base_sessions is None:
                base_sessions = _base_sessions(ctx.catalog, cfg.n_vehicles, cfg.seed, day)
            sessions = _for_scenario(base_sessions, cfg.n_vehicles, cfg.seed, day, scenario)
            base = dispatch(ctx.fleet, L)
            rows = []
            for scheme in cfg.schemes:
                if scheme == "direct":
                    sched, prof = direct_run(ctx.fleet, L, sessions)
                    agg, residual, backend, delta = prof.aggregate, 0.0, None, None
                else:
                    sol = green_run(ctx.fleet, L, sessions, cfg.backend, cfg.delta_mwh)
                    sched, agg = sol.schedule, sol.aggregate
                    residual, backend, delta = sol.dispersal_residual, cfg.backend, cfg.delta_mwh
                rows.append(
                    DailyResult(
                        date=day,
                        scenario=scenario,
                        scheme=scheme,
                        emissions_ton=sched.total_emissions - base.total_emissions,
                        cost=sched.total_cost - base.total_cost,
                        residual_mwh=residual,
                        aggregate_profile=tuple(float(v) for v in agg),
                        horizon_start_hour=start.hour,
                        backend=backend,
                        delta_mwh=delta,
                    )
                )
            results.extend(rows)
        except GridShiftError as exc:
            failures.append(DayFailure(day, scenario, str(exc), isinstance(exc, InfeasibleError)))
            log.warning("%s %s skipped: %s", day, scenario, exc)
    return results, failures


def _run_day_worker(day):
    return run_day(_WORKER_CTX, day)


def run_dates(config: RunConfig, series: LoadSeries) -> list[date]:
    first = series.start.date()
    if series.start.hour:
        first += timedelta(days=1)
    last_stamp = series.start + timedelta(hours=len(series) - 1)
    last = last_stamp.date() if last_stamp.hour == 23 else last_stamp.date() - timedelta(days=1)
    lo = max(first, config.start_date) if config.start_date else first
    hi = min(last, config.end_date) if config.end_date else last
    days = []
    d = lo
    while d <= hi:
        if not (config.weekdays_only and d.weekday() >= 5):
            days.append(d)
        d += timedelta(days=1)
    return days


def run_year(config: RunConfig, failures: list | None = None) -> list[DailyResult]:
    """Evaluate every selected date; results come back in date order.

    Failed (date, scenario) units are appended to ``failures`` when given.
    Raises when no date produced a result.
    """
    ctx = _Context(config)
    days = run_dates(config, ctx.load)
    if config.jobs > 1 and len(days) > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_init_worker, initargs=(config,)) as ex:
            outcomes = list(ex.map(_run_day_worker, days, chunksize=8))
    else:
        outcomes = [run_day(ctx, d) for d in days]
    results, failed = [], []
    for res, fail in outcomes:
        results.extend(res)
        failed.extend(fail)
    if failures is not None:
        failures.extend(failed)
    if days and not results:
        cls = InfeasibleError if failed and all(f.infeasible for f in failed) else GridShiftError
        raise cls(f"all {len(days)} day(s) failed; first error: {failed[0].error if failed else '?'}")
    return results


def savings_pct(direct_ton: float, emission_ton: float) -> float:
    """Relative change of the emission-oriented scheme; negative is a saving."""
    if direct_ton == 0:
        return 0.0 if emission_ton == 0 else math.nan
    return (emission_ton - direct_ton) / direct_ton * 100.0


def _histogram(values: Sequence[float], width: float):
    if not values:
        return []
    idx = [math.floor(v / width + 1e-12) for v in values]
    counts = defaultdict(int)
    for i in idx:
        counts[i] += 1
    return [(i * width, (i + 1) * width, counts[i]) for i in range(min(idx), max(idx) + 1)]


def summarize(
    results: Iterable[DailyResult], threshold_ton: float = 0.01, bin_pct: float = 1.0
) -> ComparisonSummary:
    results = list(results)
    by_key = defaultdict(dict)
    for r in results:
        by_key[(r.date, r.scenario)][r.scheme] = r
    for (d, scenario), schemes in sorted(by_key.items()):
        if "emission" in schemes and "direct" not in schemes:
            raise DataError(f"{d} {scenario}: emission result has no direct counterpart")

    pct = defaultdict(list)
    sig = defaultdict(list)
    n_pairs = n_sig = 0
    for (d, scenario), schemes in sorted(by_key.items()):
        if "emission" not in schemes:
            continue
        direct, green = schemes["direct"].emissions_ton, schemes["emission"].emissions_ton
        p = savings_pct(direct, green)
        n_pairs += 1
        if math.isnan(p):
            continue
        pct[scenario].append(p)
        if abs(green - direct) > threshold_ton:
            n_sig += 1
            sig[scenario].append(p)

    hist = []
    for scenario in sorted(pct):
        hist += [(lo, hi, c, scenario) for lo, hi, c in _histogram(pct[scenario], bin_pct)]

    profiles = defaultdict(list)
    for r in results:
        profiles[(r.scenario, r.scheme)].append(r)
    mean_profiles = {}
    for key, rows in sorted(profiles.items()):
        stack = np.array([r.aggregate_profile for r in rows])
        mean_profiles[key] = (rows[0].hour_labels(), stack.mean(axis=0).tolist(), len(rows))

    modes = {}
    for scenario in sorted({r.scenario for r in results}):
        ems = [r.emissions_ton for r in results if r.scenario == scenario and r.scheme == "emission"]
        if ems:
            bins = _histogram(ems, MODE_BIN_TON)
            lo, hi, _ = max(bins, key=lambda b: b[2])
            modes[scenario] = (lo + hi) / 2

    def _mean(xs):
        return math.fsum(xs) / len(xs) if xs else None

    return ComparisonSummary(
        mean_savings_pct_day=_mean(sig.get("day", [])),
        mean_savings_pct_night=_mean(sig.get("night", [])),
        significant_fraction=n_sig / n_pairs if n_pairs else 0.0,
        n_days=n_pairs,
        threshold_ton=threshold_ton,
        n_significant=n_sig,
        histogram=tuple(hist),
        mean_profiles=mean_profiles,
        mode_emissions_ton=modes,
        savings_pct={k: tuple(v) for k, v in pct.items()},
    )


# ---------------------------------------------------------------- writers


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))


def daily_results_csv(results: Sequence[DailyResult]) -> str:
    return _csv_text(
        DAILY_COLUMNS,
        [(r.date.isoformat(), r.scenario, r.scheme, _fmt(r.emissions_ton), _fmt(r.cost), _fmt(r.residual_mwh))
         for r in results],
    )


def profiles_csv(results: Sequence[DailyResult]) -> str:
    rows = []
    for r in results:
        for h, v in zip(r.hour_labels(), r.aggregate_profile):
            rows.append((r.date.isoformat(), r.scenario, r.scheme, h, _fmt(v)))
    return _csv_text(PROFILE_COLUMNS, rows)


def runs_jsonl(results: Sequence[DailyResult]) -> str:
    lines = []
    for r in results:
        lines.append(json.dumps({
            "day": r.date.isoformat(),
            "scheme": r.scheme,
            "scenario": r.scenario,
            "emissions_ton": r.emissions_ton,
            "cost": r.cost,
            "residual_mwh": r.residual_mwh,
            "backend": r.backend,
            "delta_mwh": r.delta_mwh,
        }))
    return "".join(line + "\n" for line in lines)


def write_results(results: Sequence[DailyResult], output_dir, failures: Sequence[DayFailure] = ()) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "daily_results.csv", daily_results_csv(results))
    atomic_write(out / "profiles.csv", profiles_csv(results))
    atomic_write(out / "runs.jsonl", runs_jsonl(results))
    write_failures(failures, out)


def write_failures(failures: Sequence[DayFailure], output_dir) -> None:
    if failures:
        atomic_write(
            Path(output_dir) / "failures.csv",
            _csv_text(("date", "scenario", "error"), [(f.date.isoformat(), f.scenario, f.error) for f in failures]),
        )


def read_results(output_dir) -> list[DailyResult]:
    """Rebuild results from ``daily_results.csv`` and ``profiles.csv``."""
    out = Path(output_dir)
    profiles = defaultdict(list)
    with (out / "profiles.csv").open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            profiles[(row["date"], row["scenario"], row["scheme"])].append(
                (int(row["hour"]), float(row["aggregate_mwh"]))
            )
    results = []
    with (out / "daily_results.csv").open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DAILY_COLUMNS:
            raise DataError(f"{out / 'daily_results.csv'}: unexpected header {reader.fieldnames}")
        for row in reader:
            key = (row["date"], row["scenario"], row["scheme"])
            prof = profiles.get(key, [])
            results.append(
                DailyResult(
                    date=date.fromisoformat(row["date"]),
                    scenario=row["scenario"],
                    scheme=row["scheme"],
                    emissions_ton=float(row["emissions_ton"]),
                    cost=float(row["cost"]),
                    residual_mwh=float(row["residual_mwh"]),
                    aggregate_profile=tuple(v for _, v in prof),
                    horizon_start_hour=prof[0][0] if prof else 0,
                )
            )
    return results


def _svg(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return buf.getvalue()


def _render_daily(results):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    series = defaultdict(list)
    for r in results:
        series[(r.scenario, r.scheme)].append((r.date, r.emissions_ton))
    for (scenario, scheme), pts in sorted(series.items()):
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"{scenario} / {scheme}", lw=1)
    ax.set_ylabel("EV-attributable CO2 (ton/day)")
    if series:
        ax.legend()
    fig.autofmt_xdate()
    return _svg(fig)


def _render_histogram(summary):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for scenario in sorted({h[3] for h in summary.histogram}):
        rows = [h for h in summary.histogram if h[3] == scenario]
        ax.bar([h[0] for h in rows], [h[2] for h in rows], width=[h[1] - h[0] for h in rows],
               align="edge", alpha=0.6, label=scenario)
    ax.set_xlabel("(emission - direct) / direct  [%]")
    ax.set_ylabel("days")
    if summary.histogram:
        ax.legend()
    return _svg(fig)


def _render_profile(hours, values, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(values)), values, marker="o", ms=3)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels([str(h) for h in hours], fontsize=7)
    ax.set_xlabel("hour of day")
    ax.set_ylabel("mean aggregate charging (MWh)")
    ax.set_title(title)
    return _svg(fig)


def emit_reports(summary: ComparisonSummary, results: Sequence[DailyResult], output_dir) -> list[Path]:
    """Write the CSV/JSON report set plus SVG renders; returns written paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, data):
        atomic_write(out / name, data)
        written.append(out / name)

    put("daily_results.csv", daily_results_csv(results))
    put("profiles.csv", profiles_csv(results))
    put("summary.json", json.dumps(summary.to_json(), indent=2) + "\n")
    put(
        "savings_histogram.csv",
        _csv_text(HISTOGRAM_COLUMNS, [(_fmt(lo), _fmt(hi), c, s) for lo, hi, c, s in summary.histogram]),
    )
    for (scenario, scheme), (hours, mean, _) in summary.mean_profiles.items():
        put(f"mean_profile_{scenario}_{scheme}.csv",
            _csv_text(("hour", "mean_mwh"), [(h, _fmt(v)) for h, v in zip(hours, mean)]))
        put(f"mean_profile_{scenario}_{scheme}.svg",
            _render_profile(hours, mean, f"{scenario} / {scheme}"))
    put("daily_results.svg", _render_daily(results))
    put("savings_histogram.svg", _render_histogram(summary))
    return written
