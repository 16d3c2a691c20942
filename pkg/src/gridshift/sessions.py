"""Charging sessions and the seeded day/night session sampler.

Catalog entries are in kWh / kW; sessions are stored in MWh / MW so the grid
side works in a single unit system.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ParseError, ValidationError

SESSION_COLUMNS = ("vehicle_id", "arrival_hour", "departure_hour", "energy_mwh", "max_rate_mw")
CATALOG_COLUMNS = ("name", "battery_kwh", "max_rate_kw", "market_share")
HORIZON_HOURS = 24
MAX_RESAMPLES = 100
_FEAS_RTOL = 1e-12


@dataclass(frozen=True)
class ChargingSession:
    vehicle_id: str
    arrival: int
    departure: int
    energy_request: float
    max_rate: float

    def __post_init__(self):
        if self.arrival >= self.departure:
            raise ValidationError(
                f"session {self.vehicle_id}: arrival {self.arrival} not before departure {self.departure}"
            )
        if not self.max_rate > 0:
            raise ValidationError(f"session {self.vehicle_id}: max rate must be positive")
        window = (self.departure - self.arrival) * self.max_rate
        if not 0 < self.energy_request <= window * (1 + _FEAS_RTOL):
            raise ValidationError(
                f"session {self.vehicle_id}: energy {self.energy_request} outside (0, {window}]"
            )

    @property
    def hours(self) -> range:
        return range(self.arrival, self.departure)


@dataclass(frozen=True)
class VehicleModel:
    name: str
    battery_capacity_kwh: float
    max_rate_kw: float
    market_share: float

    def __post_init__(self):
        if not (self.battery_capacity_kwh > 0 and self.max_rate_kw > 0):
            raise ValidationError(f"vehicle model {self.name}: capacity and rate must be positive")
        if not 0 <= self.market_share <= 1:
            raise ValidationError(f"vehicle model {self.name}: share outside [0, 1]")


class ScenarioKind(str, Enum):
    DAY = "day"
    NIGHT = "night"


# (arrival window, departure window), clock hours; night departures are next day
DEFAULT_WINDOWS = {
    ScenarioKind.DAY: ((7.0, 10.0), (16.0, 20.0)),
    ScenarioKind.NIGHT: ((16.0, 20.0), (7.0, 10.0)),
}
HORIZON_START_HOUR = {ScenarioKind.DAY: 0, ScenarioKind.NIGHT: 12}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    n_vehicles: int
    arrival_window: tuple[float, float] | None = None
    departure_window: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        kind = ScenarioKind(self.kind)
        object.__setattr__(self, "kind", kind)
        arr, dep = DEFAULT_WINDOWS[kind]
        if self.arrival_window is None:
            object.__setattr__(self, "arrival_window", arr)
        if self.departure_window is None:
            object.__setattr__(self, "departure_window", dep)
        if self.n_vehicles < 0:
            raise ValidationError("n_vehicles must be non-negative")
        for w in (self.arrival_window, self.departure_window):
            if len(w) != 2 or w[0] > w[1]:
                raise ValidationError(f"window {w} must be (low, high) with low <= high")

    @property
    def horizon_start_hour(self) -> int:
        """Clock hour of horizon index 0 (night horizons run noon to noon)."""
        return HORIZON_START_HOUR[self.kind]

    def index_window(self, window) -> tuple[float, float]:
        lo = (window[0] - self.horizon_start_hour) % 24
        return lo, lo + (window[1] - window[0])

    def arrival_range(self):
        return self.index_window(self.arrival_window)

    def departure_range(self):
        lo, hi = self.index_window(self.departure_window)
        a_lo, _ = self.arrival_range()
        if lo < a_lo:
            lo, hi = lo + 24, hi + 24
        return lo, hi


def check_catalog(catalog: Sequence[VehicleModel]) -> np.ndarray:
    if not catalog:
        raise ValidationError("empty vehicle catalog")
    shares = np.array([m.market_share for m in catalog], dtype=float)
    if abs(shares.sum() - 1.0) > 1e-9:
        raise ValidationError(f"market shares sum to {shares.sum()!r}, not 1")
    return shares


def load_catalog(path=None) -> list[VehicleModel]:
    """Read a vehicle catalog CSV; ``None`` loads the bundled default.

    The bundled shares are approximate readings of a market-share chart and
    are meant to be overridden with better data when available.
    """
    if path is None:
        text = resources.files("gridshift.data").joinpath("default_catalog.csv").read_text("utf-8")
        lines = text.splitlines()
        source = "default catalog"
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        source = str(path)
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader, [])]
    if tuple(header) != CATALOG_COLUMNS:
        raise ParseError(f"{source}: header {header} does not match {list(CATALOG_COLUMNS)}", row=1)
    models = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", row=lineno)
        try:
            models.append(VehicleModel(row[0].strip(), float(row[1]), float(row[2]), float(row[3])))
        except ValueError as exc:
            raise ParseError(str(exc), row=lineno) from None
    check_catalog(models)
    return models


def _round_hour(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def _draw_windows(rng, spec: ScenarioSpec, n: int, ok=None):
    """Uniform arrival/departure draws rounded to the hour.

    Vehicles whose rounded window collapses (or fails ``ok``) are redrawn, at
    most ``MAX_RESAMPLES`` times each.
    """
    a_lo, a_hi = spec.arrival_range()
    d_lo, d_hi = spec.departure_range()
    if d_hi > HORIZON_HOURS or a_lo < 0:
        raise DomainError(f"{spec.kind.value} windows do not fit a {HORIZON_HOURS}-hour horizon")
    arrival = _round_hour(rng.uniform(a_lo, a_hi, n))
    departure = _round_hour(rng.uniform(d_lo, d_hi, n))
    for _ in range(MAX_RESAMPLES):
        bad = departure <= arrival
        if ok is not None:
            bad |= ~ok(arrival, departure)
        idx = np.flatnonzero(bad)
        if len(idx) == 0:
            return arrival, departure
        arrival[idx] = _round_hour(rng.uniform(a_lo, a_hi, len(idx)))
        departure[idx] = _round_hour(rng.uniform(d_lo, d_hi, len(idx)))
    raise DomainError(
        f"{len(idx)} vehicle(s) still infeasible after {MAX_RESAMPLES} window resamples"
    )


def vehicle_ids(n: int) -> list[str]:
    width = max(5, len(str(n)))
    return [f"v{i:0{width}d}" for i in range(n)]


def sample_sessions(catalog: Sequence[VehicleModel], spec: ScenarioSpec) -> list[ChargingSession]:
    """Draw ``spec.n_vehicles`` sessions from the share-weighted catalog.

    Energy request is the smaller of the battery size and what the parking
    window can deliver at full rate.
    """
    shares = check_catalog(catalog)
    n = spec.n_vehicles
    if n == 0:
        return []
    rng = np.random.default_rng(spec.seed)
    model_idx = rng.choice(len(catalog), size=n, p=shares)
    arrival, departure = _draw_windows(rng, spec, n)
    battery = np.array([m.battery_capacity_kwh for m in catalog])[model_idx] / 1000.0
    rate = np.array([m.max_rate_kw for m in catalog])[model_idx] / 1000.0
    energy = np.minimum(battery, (departure - arrival) * rate)
    sessions = [
        ChargingSession(vid, int(a), int(d), float(e), float(m))
        for vid, a, d, e, m in zip(vehicle_ids(n), arrival, departure, energy, rate)
    ]
    for s, cap in zip(sessions, battery):
        assert s.energy_request <= (s.departure - s.arrival) * s.max_rate
        assert s.energy_request <= cap
    return sessions


def resample_windows(sessions: Sequence[ChargingSession], spec: ScenarioSpec) -> list[ChargingSession]:
    """Same vehicles and energy requests, new arrival/departure draws from ``spec``.

    Keeps total charging demand identical across scenarios.
    """
    if not sessions:
        return []
    rng = np.random.default_rng(spec.seed)
    energy = np.array([s.energy_request for s in sessions])
    rate = np.array([s.max_rate for s in sessions])

    def fits(a, d):
        return (d - a) * rate * (1 + _FEAS_RTOL) >= energy

    arrival, departure = _draw_windows(rng, spec, len(sessions), ok=fits)
    return [
        ChargingSession(s.vehicle_id, int(a), int(d), s.energy_request, s.max_rate)
        for s, a, d in zip(sessions, arrival, departure)
    ]


def write_sessions(sessions: Sequence[ChargingSession], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SESSION_COLUMNS)
        for s in sessions:
            w.writerow([s.vehicle_id, s.arrival, s.departure, repr(s.energy_request), repr(s.max_rate)])


def read_sessions(path) -> list[ChargingSession]:
    sessions = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != SESSION_COLUMNS:
            raise ParseError(f"header {header} does not match {list(SESSION_COLUMNS)}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SESSION_COLUMNS):
                raise ParseError(f"expected {len(SESSION_COLUMNS)} fields, got {len(row)}", row=lineno)
            try:
                a, d = int(row[1]), int(row[2])
                e, m = float(row[3]), float(row[4])
            except ValueError as exc:
                raise ParseError(str(exc), row=lineno) from None
            if not (math.isfinite(e) and math.isfinite(m)):
                raise ParseError("non-finite energy or rate", row=lineno)
            try:
                sessions.append(ChargingSession(row[0].strip(), a, d, e, m))
            except ValidationError as exc:
                raise ValidationError(f"row {lineno}: {exc}") from None
    ids = [s.vehicle_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate vehicle_id in sessions file")
    return sessions
