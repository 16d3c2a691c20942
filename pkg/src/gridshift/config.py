"""Run configuration: flat ``key = value`` files, env lookup, CLI overrides.

Recognised keys (all optional except the two data paths)::

    fleet_path        generators CSV
    load_path         net-load CSV
    catalog_path      vehicle catalog CSV (bundled default if absent)
    n_vehicles        25000
    seed              0
    scenarios         day,night
    schemes           direct,emission
    delta_mwh         1.0
    backend           dp | exact
    day_window        7-19        (half-open hour-of-day range)
    threshold_mw      20000
    output_dir        results
    weekdays_only     true
    start_date        first full day in the load series
    end_date          last full day in the load series
    significance_ton  0.01
    histogram_bin_pct 1.0
    jobs              1

Relative paths are resolved against the config file's directory. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from datetime import date
from pathlib import Path

from .errors import ValidationError

CONFIG_ENV = "GRIDSHIFT_CONFIG"
SCENARIOS = ("day", "night")
SCHEMES = ("direct", "emission")
PATH_KEYS = ("fleet_path", "load_path", "catalog_path", "output_dir")


@dataclass(frozen=True)
class RunConfig:
    fleet_path: Path | None = None
    load_path: Path | None = None
    catalog_path: Path | None = None
    n_vehicles: int = 25000
    seed: int = 0
    scenarios: tuple[str, ...] = SCENARIOS
    schemes: tuple[str, ...] = SCHEMES
    delta_mwh: float = 1.0
    backend: str = "dp"
    day_window: tuple[int, int] = (7, 19)
    threshold_mw: float = 20000.0
    output_dir: Path = Path("results")
    weekdays_only: bool = True
    start_date: date | None = None
    end_date: date | None = None
    significance_ton: float = 0.01
    histogram_bin_pct: float = 1.0
    jobs: int = 1

    def validate(self, need=("fleet_path", "load_path")) -> "RunConfig":
        for key in need:
            path = getattr(self, key)
            if path is None:
                raise ValidationError(f"config: {key} is required")
            if not Path(path).exists():
                raise ValidationError(f"config: {key} {path} does not exist")
        if self.catalog_path is not None and not Path(self.catalog_path).exists():
            raise ValidationError(f"config: catalog_path {self.catalog_path} does not exist")
        if self.n_vehicles < 0:
            raise ValidationError("config: n_vehicles must be >= 0")
        if not self.delta_mwh > 0:
            raise ValidationError("config: delta_mwh must be > 0")
        if not self.threshold_mw > 0:
            raise ValidationError("config: threshold_mw must be > 0")
        if self.backend not in ("dp", "exact"):
            raise ValidationError(f"config: unknown backend {self.backend!r}")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValidationError(f"config: unknown scenario {s!r}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValidationError(f"config: unknown scheme {s!r}")
        lo, hi = self.day_window
        if not (0 <= lo < 24 and 0 <= hi <= 24 and lo != hi):
            raise ValidationError(f"config: bad day_window {self.day_window}")
        if self.start_date and self.end_date and self.start_date > self.end_date:
            raise ValidationError("config: start_date after end_date")
        if self.jobs < 1:
            raise ValidationError("config: jobs must be >= 1")
        return self


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _window(text: str) -> tuple[int, int]:
    lo, hi = text.replace(",", "-").split("-")
    return int(lo), int(hi)


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


_PARSERS = {
    "n_vehicles": int,
    "seed": int,
    "delta_mwh": float,
    "threshold_mw": float,
    "significance_ton": float,
    "histogram_bin_pct": float,
    "jobs": int,
    "weekdays_only": _bool,
    "day_window": _window,
    "scenarios": _names,
    "schemes": _names,
    "backend": str.strip,
    "start_date": date.fromisoformat,
    "end_date": date.fromisoformat,
}


def coerce(key: str, value, base_dir: Path | None = None):
    known = {f.name for f in fields(RunConfig)}
    if key not in known:
        raise ValidationError(f"config: unknown key {key!r}")
    if not isinstance(value, str):
        return value
    value = value.strip()
    if key in PATH_KEYS:
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return path
    try:
        return _PARSERS[key](value)
    except ValueError as exc:
        raise ValidationError(f"config: bad value for {key}: {exc}") from None


def parse_config_text(text: str, base_dir: Path | None = None) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key] = coerce(key, value, base_dir)
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file (explicit path or ``$GRIDSHIFT_CONFIG``),
    then ``overrides`` (CLI flags). Unset overrides (None) are ignored."""
    if path is None and os.environ.get(CONFIG_ENV):
        path = os.environ[CONFIG_ENV]
    values = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, path.parent))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce(key, value)
    return replace(RunConfig(), **values)
