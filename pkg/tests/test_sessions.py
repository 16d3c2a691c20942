import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from gridshift.errors import ParseError, ValidationError
from gridshift.sessions import (
    ChargingSession,
    ScenarioKind,
    ScenarioSpec,
    VehicleModel,
    load_catalog,
    read_sessions,
    resample_windows,
    sample_sessions,
    write_sessions,
)

CATALOG = load_catalog()


def test_default_catalog():
    names = [m.name for m in CATALOG]
    assert len(names) == 10
    leaf = next(m for m in CATALOG if "Leaf" in m.name)
    assert (leaf.battery_capacity_kwh, leaf.max_rate_kw) == (26.0, 6.6)
    assert abs(sum(m.market_share for m in CATALOG) - 1) <= 1e-9


def test_catalog_shares_must_sum_to_one(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("name,battery_kwh,max_rate_kw,market_share\na,20,6.6,0.5\nb,30,7.2,0.4\n")
    with pytest.raises(ValidationError):
        load_catalog(p)


def test_sample_day_25k_shares():
    sessions = sample_sessions(CATALOG, ScenarioSpec("day", 25000, seed=7))
    assert len(sessions) == 25000
    # models are not identifiable from a session, but their charging rates
    # fall into three classes whose pooled shares are known
    pooled = {}
    for m in CATALOG:
        key = m.max_rate_kw / 1000
        pooled[key] = pooled.get(key, 0.0) + m.market_share
    rates = sorted(pooled)
    observed = [sum(s.max_rate == r for s in sessions) for r in rates]
    expected = [pooled[r] * 25000 for r in rates]
    assert sum(observed) == 25000
    assert chisquare(observed, expected).pvalue > 0.001


def test_sample_single_model_window_limited():
    cat = [VehicleModel("m", 24.0, 6.6, 1.0)]
    spec = ScenarioSpec("day", 50, arrival_window=(8, 8), departure_window=(10, 10), seed=1)
    for s in sample_sessions(cat, spec):
        assert (s.arrival, s.departure) == (8, 10)
        assert s.energy_request == pytest.approx(0.0132, abs=1e-15)


def test_sample_zero():
    assert sample_sessions(CATALOG, ScenarioSpec("day", 0)) == []


def test_sample_deterministic():
    a = sample_sessions(CATALOG, ScenarioSpec("night", 500, seed=3))
    b = sample_sessions(CATALOG, ScenarioSpec("night", 500, seed=3))
    assert a == b
    assert a != sample_sessions(CATALOG, ScenarioSpec("night", 500, seed=4))


@pytest.mark.parametrize("kind, a_range, d_range", [
    ("day", (7, 10), (16, 20)),
    # night horizon starts at noon: 16-20h -> 4-8, next-day 7-10h -> 19-22
    ("night", (4, 8), (19, 22)),
])
def test_windows(kind, a_range, d_range):
    sessions = sample_sessions(CATALOG, ScenarioSpec(kind, 2000, seed=11))
    arr = [s.arrival for s in sessions]
    dep = [s.departure for s in sessions]
    assert a_range[0] <= min(arr) and max(arr) <= a_range[1]
    assert d_range[0] <= min(dep) and max(dep) <= d_range[1]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["day", "night"]), st.integers(1, 300), st.integers(0, 2**32))
def test_feasible_by_construction(kind, n, seed):
    battery = {(m.max_rate_kw / 1000): m.battery_capacity_kwh / 1000 for m in CATALOG}
    for s in sample_sessions(CATALOG, ScenarioSpec(kind, n, seed=seed)):
        assert 0 < s.energy_request <= (s.departure - s.arrival) * s.max_rate
        assert s.energy_request <= max(battery.values())
        assert 0 <= s.arrival < s.departure <= 24


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**32))
def test_resample_keeps_energy(n, seed):
    day = sample_sessions(CATALOG, ScenarioSpec("day", n, seed=seed))
    night = resample_windows(day, ScenarioSpec(ScenarioKind.NIGHT, n, seed=seed + 1))
    assert [s.vehicle_id for s in night] == [s.vehicle_id for s in day]
    assert [s.energy_request for s in night] == [s.energy_request for s in day]
    for s in night:
        assert s.energy_request <= (s.departure - s.arrival) * s.max_rate


def test_session_invariants():
    with pytest.raises(ValidationError):
        ChargingSession("x", 5, 5, 1.0, 1.0)
    with pytest.raises(ValidationError):
        ChargingSession("x", 1, 3, 2.5, 1.0)
    with pytest.raises(ValidationError):
        ChargingSession("x", 1, 3, 0.0, 1.0)
    with pytest.raises(ValidationError):
        ChargingSession("x", 1, 3, 1.0, 0.0)


def test_roundtrip(tmp_path):
    sessions = [
        ChargingSession("a", 7, 17, 0.024, 0.0066),
        ChargingSession("b", 8, 19, 0.01 + 0.02, 0.0072),
        ChargingSession("c", 9, 16, 0.03, 0.0115),
    ]
    write_sessions(sessions, tmp_path / "s.csv")
    assert read_sessions(tmp_path / "s.csv") == sessions


def test_read_rejects_bad_window(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("vehicle_id,arrival_hour,departure_hour,energy_mwh,max_rate_mw\na,10,9,0.01,0.0066\n")
    with pytest.raises(ValidationError):
        read_sessions(p)


def test_read_bad_number_names_row(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("vehicle_id,arrival_hour,departure_hour,energy_mwh,max_rate_mw\n"
                 "a,7,9,0.01,0.0066\nb,7,x,0.01,0.0066\n")
    with pytest.raises(ParseError, match="row 3"):
        read_sessions(p)


def test_read_header_only(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("vehicle_id,arrival_hour,departure_hour,energy_mwh,max_rate_mw\n")
    assert read_sessions(p) == []
