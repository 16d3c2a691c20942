import csv
import json
import math
from dataclasses import replace
from datetime import date, datetime

import numpy as np
import pytest

from gridshift import sim
from gridshift.errors import DataError
from gridshift.grid import LoadSeries
from gridshift.sessions import load_catalog
from gridshift.sim import DailyResult, emit_reports, run_dates, run_year, summarize


def _pair(day, scenario, direct, emission, profile=(1.0, 2.0)):
    return [
        DailyResult(day, scenario, "direct", direct, 0.0, 0.0, profile),
        DailyResult(day, scenario, "emission", emission, 0.0, 0.0, profile),
    ]


def test_cardinality(small_config):
    cfg = replace(small_config, scenarios=("day",))
    results = run_year(cfg)
    assert len(results) == 10
    assert [r.date for r in results[::2]] == [date(2019, 3, d) for d in range(4, 9)]


def test_weekends_excluded(small_config):
    series = LoadSeries(datetime(2019, 3, 1), np.ones(24 * 12))
    cfg = replace(small_config, start_date=None, end_date=None)
    days = run_dates(cfg, series)
    assert all(d.weekday() < 5 for d in days)
    assert date(2019, 3, 2) not in days and date(2019, 3, 11) in days
    assert len(run_dates(replace(cfg, weekdays_only=False), series)) == 12


def test_profiles_carry_all_energy(small_config):
    cfg = replace(small_config, end_date=date(2019, 3, 5))
    catalog = load_catalog()
    for r in run_year(cfg):
        sessions = sim.sessions_for(catalog, cfg.n_vehicles, cfg.seed, r.date, r.scenario)
        assert sum(r.aggregate_profile) == pytest.approx(sum(s.energy_request for s in sessions), abs=1e-6)
        assert r.emissions_ton >= 0
        assert r.hour_labels()[0] == (12 if r.scenario == "night" else 0)


def test_day_and_night_share_vehicles(small_config):
    catalog = load_catalog()
    day = sim.sessions_for(catalog, 50, 1, date(2019, 3, 4), "day")
    night = sim.sessions_for(catalog, 50, 1, date(2019, 3, 4), "night")
    assert [s.energy_request for s in day] == [s.energy_request for s in night]
    assert [s.arrival for s in day] != [s.arrival for s in night]


def test_uncovered_horizon_is_skipped(small_config):
    # the night horizon of the last day runs past the end of the series
    cfg = replace(small_config, start_date=date(2019, 12, 31), end_date=None)
    failures = []
    results = run_year(cfg, failures)
    assert {r.scenario for r in results} == {"day"}
    assert [(f.date, f.scenario) for f in failures] == [(date(2019, 12, 31), "night")]


def test_deterministic_and_parallel(small_config):
    cfg = replace(small_config, end_date=date(2019, 3, 6))
    a = sim.daily_results_csv(run_year(cfg))
    b = sim.daily_results_csv(run_year(cfg))
    c = sim.daily_results_csv(run_year(replace(cfg, jobs=2)))
    assert a == b == c


def test_savings_formula():
    s = summarize(_pair(date(2019, 1, 2), "day", 100.0, 90.0))
    assert s.mean_savings_pct_day == pytest.approx(-10.0)
    assert s.significant_fraction == 1.0


def test_insignificant_pair():
    results = _pair(date(2019, 1, 2), "day", 100.0, 99.995) + _pair(date(2019, 1, 3), "day", 100.0, 90.0)
    s = summarize(results)
    assert s.n_significant == 1 and s.n_days == 2
    assert s.mean_savings_pct_day == pytest.approx(-10.0)


def test_all_identical():
    results = _pair(date(2019, 1, 2), "day", 50.0, 50.0) + _pair(date(2019, 1, 3), "night", 40.0, 40.0)
    s = summarize(results)
    assert s.significant_fraction == 0
    assert s.mean_savings_pct_day is None and s.mean_savings_pct_night is None
    # every pair lands in the [0, 1) bin
    assert sorted((h[0], h[2], h[3]) for h in s.histogram) == [(0.0, 1, "day"), (0.0, 1, "night")]


def test_unmatched_pair():
    lone = [DailyResult(date(2019, 1, 2), "day", "emission", 1.0, 0.0, 0.0, (1.0,))]
    with pytest.raises(DataError, match="2019-01-02"):
        summarize(lone)


def test_histogram_counts_all_pairs():
    results = []
    for i, em in enumerate([90, 95.5, 99.2, 100, 85]):
        results += _pair(date(2019, 1, 1 + i), "day", 100.0, float(em))
    s = summarize(results, bin_pct=5.0)
    assert sum(h[2] for h in s.histogram) == s.n_days == 5
    assert all(h[1] - h[0] == 5.0 for h in s.histogram)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_reports(small_config, tmp_path):
    cfg = replace(small_config, end_date=date(2019, 3, 4))
    results = run_year(cfg)
    summary = summarize(results)
    out = tmp_path / "rep"
    emit_reports(summary, results, out)
    names = {p.name for p in out.iterdir()}
    for required in ("daily_results.csv", "summary.json", "savings_histogram.csv",
                     "mean_profile_day_direct.csv", "mean_profile_night_emission.csv",
                     "daily_results.svg", "savings_histogram.svg", "mean_profile_day_emission.svg"):
        assert required in names
    payload = json.loads((out / "summary.json").read_text())
    assert list(payload)[:5] == ["mean_savings_pct_day", "mean_savings_pct_night",
                                 "significant_fraction", "n_days", "threshold_ton"]
    # rerun overwrites in place and leaves no temp files
    emit_reports(summary, results, out)
    assert {p.name for p in out.iterdir()} == names


def test_savings_identity_and_mean_profiles(small_config, tmp_path):
    results = run_year(small_config)
    summary = summarize(results)
    out = tmp_path / "rep"
    emit_reports(summary, results, out)
    rows = _read_csv(out / "daily_results.csv")
    pairs = {}
    for r in rows:
        pairs.setdefault((r["date"], r["scenario"]), {})[r["scheme"]] = float(r["emissions_ton"])
    sig = {"day": [], "night": []}
    for (_, scenario), p in sorted(pairs.items()):
        if abs(p["emission"] - p["direct"]) > 0.01:
            sig[scenario].append((p["emission"] - p["direct"]) / p["direct"] * 100)
    payload = json.loads((out / "summary.json").read_text())
    for scenario in ("day", "night"):
        expect = math.fsum(sig[scenario]) / len(sig[scenario]) if sig[scenario] else None
        assert payload[f"mean_savings_pct_{scenario}"] == expect
    for scenario in ("day", "night"):
        for scheme in ("direct", "emission"):
            mean = [float(r["mean_mwh"]) for r in _read_csv(out / f"mean_profile_{scenario}_{scheme}.csv")]
            total = np.sum([r.aggregate_profile for r in results
                            if r.scenario == scenario and r.scheme == scheme], axis=0)
            assert np.allclose(np.array(mean) * 5, total, atol=1e-6)


def test_empty_results(tmp_path):
    summary = summarize([])
    emit_reports(summary, [], tmp_path)
    payload = json.loads((tmp_path / "summary.json").read_text())
    assert payload["n_days"] == 0 and payload["significant_fraction"] == 0
    assert (tmp_path / "savings_histogram.csv").read_text().splitlines() == [
        "bin_left_pct,bin_right_pct,count,scenario"
    ]


def test_results_roundtrip(small_config, tmp_path):
    results = run_year(replace(small_config, end_date=date(2019, 3, 5)))
    sim.write_results(results, tmp_path)
    back = sim.read_results(tmp_path)
    assert [(r.date, r.scenario, r.scheme, r.emissions_ton, r.aggregate_profile, r.horizon_start_hour)
            for r in back] == [(r.date, r.scenario, r.scheme, r.emissions_ton, r.aggregate_profile,
                                r.horizon_start_hour) for r in results]
    assert summarize(back).to_json() == summarize(results).to_json()
