"""Generator fleet, net-load series and merit-order analytics.

Units: capacities and loads in MW; with hourly steps these are numerically
equal to MWh per step, and everything downstream works in MWh per hour.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContinuityError, DomainError, ParseError, ValidationError

COAL_RAMP_FRACTION = 0.6

GENERATOR_COLUMNS = (
    "id",
    "fuel",
    "capacity_mw",
    "marginal_cost_usd_per_mwh",
    "emission_ton_per_mwh",
    "ramp_mw_per_h",
)
LOAD_COLUMNS = ("timestamp", "net_load_mw")


class Fuel(str, Enum):
    COAL = "coal"
    GAS = "gas"
    NUCLEAR = "nuclear"
    HYDRO = "hydro"
    OTHER = "other"


def default_ramp(fuel: Fuel, capacity_mw: float) -> float:
    if fuel is Fuel.COAL:
        return COAL_RAMP_FRACTION * capacity_mw
    return capacity_mw


@dataclass(frozen=True)
class Generator:
    id: str
    fuel: Fuel
    capacity_mw: float
    marginal_cost: float
    emission_rate: float
    ramp_limit_mw: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "fuel", Fuel(self.fuel))
        if not self.capacity_mw > 0:
            raise ValidationError(f"generator {self.id}: capacity must be positive")
        if self.marginal_cost < 0:
            raise ValidationError(f"generator {self.id}: negative marginal cost")
        if self.emission_rate < 0:
            raise ValidationError(f"generator {self.id}: negative emission rate")
        if self.ramp_limit_mw is None:
            object.__setattr__(self, "ramp_limit_mw", default_ramp(self.fuel, self.capacity_mw))
        if not 0 < self.ramp_limit_mw <= self.capacity_mw:
            raise ValidationError(
                f"generator {self.id}: ramp limit must lie in (0, capacity]"
            )

    def merit_key(self):
        # cost, then cleaner first, then id
        return (self.marginal_cost, self.emission_rate, self.id)


@dataclass(frozen=True)
class Fleet:
    """Generators in merit order, with column arrays for the dispatch kernels."""

    generators: tuple[Generator, ...]
    capacity: np.ndarray = field(init=False, repr=False, compare=False)
    cost: np.ndarray = field(init=False, repr=False, compare=False)
    emission: np.ndarray = field(init=False, repr=False, compare=False)
    ramp: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        gens = tuple(sorted(self.generators, key=Generator.merit_key))
        ids = [g.id for g in gens]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate generator id(s): {', '.join(dup)}")
        object.__setattr__(self, "generators", gens)
        for name, attr in (
            ("capacity", "capacity_mw"),
            ("cost", "marginal_cost"),
            ("emission", "emission_rate"),
            ("ramp", "ramp_limit_mw"),
        ):
            arr = np.array([getattr(g, attr) for g in gens], dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.generators)

    @property
    def ids(self) -> list[str]:
        return [g.id for g in self.generators]

    @property
    def total_capacity(self) -> float:
        return float(self.capacity.sum())


@dataclass(frozen=True)
class LoadSeries:
    start: datetime
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or len(values) == 0:
            raise DomainError("load series must be a non-empty 1-D sequence")
        if np.any(values < 0):
            bad = int(np.argmax(values < 0))
            raise ValidationError(f"negative net load at index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.start.minute or self.start.second or self.start.microsecond:
            raise ValidationError("series start must fall on the hour")

    def __len__(self):
        return len(self.values)

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(hours=i) for i in range(len(self.values))]

    def index_of(self, when: datetime) -> int:
        offset = (when - self.start) / timedelta(hours=1)
        if offset != int(offset):
            raise DomainError(f"{when} is not on the series hour grid")
        return int(offset)

    def window(self, start: datetime, hours: int) -> np.ndarray:
        i = self.index_of(start)
        if i < 0 or i + hours > len(self.values):
            raise DomainError(f"series does not cover {start} + {hours} h")
        return self.values[i : i + hours]


@dataclass(frozen=True)
class EmissionCurvePoint:
    cumulative_capacity_mw: float
    marginal_emission_rate: float


@dataclass(frozen=True)
class ThresholdReport:
    threshold_mw: float
    day_window: tuple[int, int]
    n_hours: int
    hours_below: int
    fraction_below: float
    below_in_day: int
    below_outside_day: int
    mean_load_day: float
    mean_load_night: float

    def as_dict(self):
        return {
            "threshold_mw": self.threshold_mw,
            "day_window": list(self.day_window),
            "n_hours": self.n_hours,
            "hours_below": self.hours_below,
            "fraction_below": self.fraction_below,
            "below_in_day": self.below_in_day,
            "below_outside_day": self.below_outside_day,
            "mean_load_day": self.mean_load_day,
            "mean_load_night": self.mean_load_night,
        }


def _read_rows(path, columns):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected header", row=1) from None
        header = [h.strip() for h in header]
        if tuple(header) != columns:
            raise ParseError(
                f"{path}: header {header} does not match {list(columns)}", row=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise ParseError(
                    f"expected {len(columns)} fields, got {len(row)}", row=lineno
                )
            yield lineno, [c.strip() for c in row]


def _number(text, what, lineno):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} is not a number: {text!r}", row=lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} is not finite", row=lineno)
    return value


def load_fleet(path) -> Fleet:
    """Read a generators CSV into a merit-ordered fleet.

    An empty ramp field gets the fuel default (60% of capacity for coal,
    full capacity otherwise).
    """
    gens = []
    for lineno, (gid, fuel, cap, cost, theta, ramp) in _read_rows(path, GENERATOR_COLUMNS):
        if not gid:
            raise ParseError("empty generator id", row=lineno)
        try:
            fuel = Fuel(fuel.lower())
        except ValueError:
            raise ParseError(f"unknown fuel {fuel!r}", row=lineno) from None
        try:
            gens.append(
                Generator(
                    id=gid,
                    fuel=fuel,
                    capacity_mw=_number(cap, "capacity_mw", lineno),
                    marginal_cost=_number(cost, "marginal_cost", lineno),
                    emission_rate=_number(theta, "emission_rate", lineno),
                    ramp_limit_mw=_number(ramp, "ramp", lineno) if ramp else None,
                )
            )
        except ParseError:
            raise
        except ValidationError as exc:
            raise ValidationError(f"row {lineno}: {exc}") from None
    return Fleet(tuple(gens))


def write_fleet(fleet: Fleet, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GENERATOR_COLUMNS)
        for g in fleet.generators:
            w.writerow(
                [g.id, g.fuel.value, g.capacity_mw, g.marginal_cost, g.emission_rate, g.ramp_limit_mw]
            )


def _parse_timestamp(text, lineno):
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"bad ISO-8601 timestamp {text!r}", row=lineno) from None
    if ts.tzinfo is not None:
        ts = ts.replace(tzinfo=None)
    if ts.minute or ts.second or ts.microsecond:
        raise ParseError(f"timestamp {text!r} is not on the hour", row=lineno)
    return ts


def load_series(path) -> LoadSeries:
    """Read a ``timestamp,net_load_mw`` CSV; timestamps must be contiguous hours."""
    stamps, values = [], []
    for lineno, (ts, value) in _read_rows(path, LOAD_COLUMNS):
        stamp = _parse_timestamp(ts, lineno)
        v = _number(value, "net_load_mw", lineno)
        if v < 0:
            raise ValidationError(f"row {lineno}: negative net load {v}")
        if stamps and stamp != stamps[-1] + timedelta(hours=1):
            index = len(stamps)
            kind = "duplicate" if stamp <= stamps[-1] else "gap before"
            raise ContinuityError(f"{kind} timestamp {ts}", index=index)
        stamps.append(stamp)
        values.append(v)
    if not values:
        raise DomainError(f"{path}: load series has no rows")
    return LoadSeries(start=stamps[0], values=np.array(values))


def write_series(series: LoadSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOAD_COLUMNS)
        for ts, v in zip(series.timestamps(), series.values):
            w.writerow([ts.isoformat(timespec="hours"), repr(float(v))])


def marginal_emission_curve(fleet: Fleet) -> list[EmissionCurvePoint]:
    if len(fleet) == 0:
        raise DomainError("marginal emission curve of an empty fleet")
    cumulative = np.cumsum(fleet.capacity)
    return [
        EmissionCurvePoint(float(c), float(theta))
        for c, theta in zip(cumulative, fleet.emission)
    ]


def marginal_rate_at(curve: Sequence[EmissionCurvePoint], demand_mw: float) -> float:
    """Emission rate of the block that serves the last MW of ``demand_mw``."""
    if not curve:
        raise DomainError("empty emission curve")
    top = curve[-1].cumulative_capacity_mw
    if not 0 < demand_mw <= top:
        raise DomainError(f"demand {demand_mw} outside (0, {top}]")
    caps = [p.cumulative_capacity_mw for p in curve]
    return curve[bisect.bisect_left(caps, demand_mw)].marginal_emission_rate


def in_window(hour: int, window: tuple[int, int]) -> bool:
    """Half-open hour-of-day window; start > end wraps past midnight."""
    start, end = window
    if start <= end:
        return start <= hour < end
    return hour >= start or hour < end


def low_generation_stats(
    series: LoadSeries, threshold_mw: float, day_window: tuple[int, int] = (7, 19)
) -> ThresholdReport:
    if not threshold_mw > 0:
        raise DomainError("threshold must be positive")
    values = series.values
    if len(values) == 0:
        raise DomainError("empty series")
    start, end = day_window
    if not (0 <= start < 24 and 0 <= end <= 24) or start == end:
        raise DomainError(f"bad day window {day_window}")
    hours = (series.start.hour + np.arange(len(values))) % 24
    if start <= end:
        is_day = (hours >= start) & (hours < end)
    else:
        is_day = (hours >= start) | (hours < end)
    below = values < threshold_mw
    n_below = int(below.sum())

    def _mean(mask):
        return float(values[mask].mean()) if mask.any() else float("nan")

    return ThresholdReport(
        threshold_mw=float(threshold_mw),
        day_window=(start, end),
        n_hours=len(values),
        hours_below=n_below,
        fraction_below=n_below / len(values),
        below_in_day=int((below & is_day).sum()),
        below_outside_day=int((below & ~is_day).sum()),
        mean_load_day=_mean(is_day),
        mean_load_night=_mean(~is_day),
    )
