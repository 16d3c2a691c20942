"""Uncontrolled (plug-and-charge) charging profiles."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dispatch import DispatchSchedule, dispatch
from .errors import DomainError
from .grid import Fleet
from .sessions import ChargingSession


@dataclass(frozen=True)
class ChargingProfile:
    """Per-vehicle hourly energy (rows sorted by vehicle id) and their sum."""

    vehicle_ids: tuple[str, ...]
    matrix: np.ndarray  # N x T, MWh
    aggregate: np.ndarray  # T, MWh

    @classmethod
    def from_rows(cls, ids: Sequence[str], rows: np.ndarray, horizon: int) -> "ChargingProfile":
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        matrix = np.asarray(rows, dtype=float).reshape(len(ids), horizon)[order]
        aggregate = matrix.sum(axis=0) if len(ids) else np.zeros(horizon)
        matrix.setflags(write=False)
        aggregate.setflags(write=False)
        return cls(tuple(ids[i] for i in order), matrix, aggregate)

    @property
    def horizon(self) -> int:
        return len(self.aggregate)

    @property
    def per_vehicle(self) -> Mapping[str, np.ndarray]:
        return dict(zip(self.vehicle_ids, self.matrix))


def check_horizon(sessions: Sequence[ChargingSession], horizon: int) -> None:
    for s in sessions:
        if s.arrival < 0 or s.departure > horizon:
            raise DomainError(
                f"session {s.vehicle_id} [{s.arrival}, {s.departure}) outside horizon [0, {horizon})"
            )


def direct_charge(session: ChargingSession, t: int) -> float:
    """Energy delivered in hour ``t`` when charging flat out from arrival."""
    if not session.arrival <= t < session.departure:
        return 0.0
    remaining = session.energy_request - (t - session.arrival) * session.max_rate
    return min(max(remaining, 0.0), session.max_rate)


def direct_profile(sessions: Sequence[ChargingSession], horizon: int) -> ChargingProfile:
    check_horizon(sessions, horizon)
    if sessions:
        a = np.array([s.arrival for s in sessions])[:, None]
        d = np.array([s.departure for s in sessions])[:, None]
        e = np.array([s.energy_request for s in sessions])[:, None]
        m = np.array([s.max_rate for s in sessions])[:, None]
        t = np.arange(horizon)[None, :]
        # same operation order as direct_charge, so results match bit for bit
        rows = np.minimum(np.maximum(e - (t - a) * m, 0.0), m)
        rows = np.where((a <= t) & (t < d), rows, 0.0)
    else:
        rows = np.zeros((0, horizon))
    return ChargingProfile.from_rows([s.vehicle_id for s in sessions], rows, horizon)


def direct_run(
    fleet: Fleet, load: Sequence[float], sessions: Sequence[ChargingSession]
) -> tuple[DispatchSchedule, ChargingProfile]:
    load = np.asarray(load, dtype=float)
    profile = direct_profile(sessions, len(load))
    return dispatch(fleet, load + profile.aggregate), profile


def write_profile(profile: ChargingProfile, path, hour_offset: int = 0) -> None:
    """Long-format ``hour,vehicle_id,charge_mwh``; zero entries are omitted."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "vehicle_id", "charge_mwh"])
        for t in range(profile.horizon):
            col = profile.matrix[:, t]
            for i in np.flatnonzero(col):
                w.writerow([t + hour_offset, profile.vehicle_ids[i], repr(float(col[i]))])


def write_aggregate(values, path, column: str = "aggregate_mwh", hour_offset: int = 0) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", column])
        for t, v in enumerate(values):
            w.writerow([t + hour_offset, repr(float(v))])
