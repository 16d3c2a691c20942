"""Hourly merit-order dispatch with ramp limits.

Each hour is cleared by filling the stack in merit order. A generator's
effective cap is ``min(P_j, q_j(t-1) + r_j)`` and its ramp-down floor is
``max(0, q_j(t-1) - r_j)``; the first hour of a horizon is unconstrained by
ramping. Demand above the floors is assigned cheapest-first, so a costlier
unit only rises above its floor once every cheaper unit sits at its cap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, InfeasibleError
from .grid import Fleet

STACK_TOL = 1e-6  # MWh, for "at cap" / "> 0" tests


@dataclass(frozen=True)
class DispatchSchedule:
    generator_ids: tuple[str, ...]
    output: np.ndarray  # J x T, MWh
    on_flags: np.ndarray  # J x T, bool
    total_cost: float
    total_emissions: float

    @property
    def horizon(self) -> int:
        return self.output.shape[1]

    def hourly_emissions_for(self, fleet: Fleet) -> np.ndarray:
        return fleet.emission @ self.output

    def hourly_cost_for(self, fleet: Fleet) -> np.ndarray:
        return fleet.cost @ self.output


def _as_demand(values) -> np.ndarray:
    demand = np.asarray(values, dtype=float)
    if demand.ndim != 1 or len(demand) == 0:
        raise DomainError("demand must be a non-empty 1-D series")
    if np.any(demand < 0) or not np.all(np.isfinite(demand)):
        bad = int(np.argmax(~(demand >= 0)))
        raise DomainError(f"invalid demand {demand[bad]} at hour {bad}")
    return demand


def hour_limits(fleet: Fleet, previous_output=None):
    """(floors, caps) for the next hour given last hour's output."""
    if previous_output is None:
        return np.zeros(len(fleet)), np.array(fleet.capacity)
    prev = np.asarray(previous_output, dtype=float)
    caps = np.minimum(fleet.capacity, prev + fleet.ramp)
    floors = np.maximum(0.0, prev - fleet.ramp)
    return floors, caps


def _fill_hour(capacity, ramp, theta, prev, d, hour=None):
    """Pure-Python stack fill on plain lists; returns (emission, output list)."""
    n = len(capacity)
    if prev is None:
        lo = [0.0] * n
        hi = capacity
    else:
        lo = [p - r if p > r else 0.0 for p, r in zip(prev, ramp)]
        hi = [c if p + r > c else p + r for c, p, r in zip(capacity, prev, ramp)]
    rem = d - sum(lo)
    tol = 1e-9 * (1.0 + abs(d))
    if rem < -tol:
        raise InfeasibleError(
            f"demand {d:.6g} MWh below ramp-down floors {d - rem:.6g} MWh", hour=hour
        )
    q = list(lo)
    for j in range(n):
        if rem <= 0.0:
            break
        room = hi[j] - lo[j]
        take = room if room < rem else rem
        q[j] += take
        rem -= take
    if rem > tol:
        raise InfeasibleError(
            f"demand {d:.6g} MWh exceeds reachable capacity by {rem:.6g} MWh", hour=hour
        )
    emission = 0.0
    for t, x in zip(theta, q):
        emission += t * x
    return emission, q


class _Kernel:
    """Fleet columns as Python lists, for tight per-hour loops."""

    __slots__ = ("capacity", "ramp", "theta")

    def __init__(self, fleet: Fleet):
        self.capacity = fleet.capacity.tolist()
        self.ramp = fleet.ramp.tolist()
        self.theta = fleet.emission.tolist()

    def __call__(self, prev, d, hour=None):
        return _fill_hour(self.capacity, self.ramp, self.theta, prev, d, hour)


def emissions_of_demand(fleet: Fleet, previous_output, d: float):
    """One hour of stacked dispatch.

    ``previous_output=None`` marks the first hour of a horizon (caps = P_j).
    Returns ``(emission_ton, next_output)``.
    """
    if d < 0:
        raise DomainError(f"negative demand {d}")
    prev = None if previous_output is None else [float(x) for x in previous_output]
    if prev is not None and len(prev) != len(fleet):
        raise DomainError("previous_output length does not match fleet")
    emission, q = _Kernel(fleet)(prev, float(d))
    return emission, np.array(q)


def _schedule(fleet: Fleet, output: np.ndarray) -> DispatchSchedule:
    output.setflags(write=False)
    on = output > STACK_TOL
    on.setflags(write=False)
    return DispatchSchedule(
        generator_ids=tuple(fleet.ids),
        output=output,
        on_flags=on,
        total_cost=float(np.sum(fleet.cost @ output)),
        total_emissions=float(np.sum(fleet.emission @ output)),
    )


def dispatch(fleet: Fleet, demand: Sequence[float]) -> DispatchSchedule:
    demand = _as_demand(demand)
    kernel = _Kernel(fleet)
    out = np.zeros((len(fleet), len(demand)))
    prev = None
    for t, d in enumerate(demand):
        _, prev = kernel(prev, float(d), hour=t)
        out[:, t] = prev
    return _schedule(fleet, out)


def dispatch_cost_emissions(fleet: Fleet, demand: Sequence[float]) -> tuple[float, float]:
    s = dispatch(fleet, demand)
    return s.total_cost, s.total_emissions


def check_schedule(fleet: Fleet, demand, schedule: DispatchSchedule, tol: float = STACK_TOL) -> list[str]:
    """Return every invariant violation found in ``schedule`` (empty when valid).

    Checks balance, bounds, ramping in both directions, merit-order stacking,
    on/off flags and the recomputed totals.
    """
    demand = np.asarray(demand, dtype=float)
    q = schedule.output
    J, T = q.shape
    problems = []
    if J != len(fleet) or T != len(demand):
        return [f"shape {q.shape} does not match fleet {len(fleet)} x horizon {len(demand)}"]
    P, r = fleet.capacity, fleet.ramp
    for t in range(T):
        if abs(q[:, t].sum() - demand[t]) > tol:
            problems.append(f"t={t}: balance off by {q[:, t].sum() - demand[t]:.3g}")
        if np.any(q[:, t] < -tol):
            problems.append(f"t={t}: negative output")
        if np.any(q[:, t] > P + tol):
            problems.append(f"t={t}: output above capacity")
        floors, caps = hour_limits(fleet, None if t == 0 else q[:, t - 1])
        if t > 0:
            step = q[:, t] - q[:, t - 1]
            if np.any(np.abs(step) > r + tol):
                j = int(np.argmax(np.abs(step) - r))
                problems.append(f"t={t}: generator {fleet.ids[j]} ramps {step[j]:.6g} > {r[j]:.6g}")
        for j in range(J - 1):
            if q[j + 1, t] > floors[j + 1] + tol and q[j, t] < caps[j] - tol:
                problems.append(
                    f"t={t}: {fleet.ids[j + 1]} dispatched while cheaper {fleet.ids[j]} below its cap"
                )
            forced = floors[j + 1] > tol and q[j + 1, t] <= floors[j + 1] + tol
            if schedule.on_flags[j + 1, t] and not schedule.on_flags[j, t] and not forced:
                problems.append(f"t={t}: on-flag order broken at {fleet.ids[j]}")
    if not np.array_equal(schedule.on_flags, q > tol):
        problems.append("on_flags disagree with output > 0")
    emissions = float(np.sum(fleet.emission @ q))
    cost = float(np.sum(fleet.cost @ q))
    if emissions != schedule.total_emissions:
        problems.append("total_emissions not recomputable from output")
    if cost != schedule.total_cost:
        problems.append("total_cost not recomputable from output")
    return problems


def write_schedule(fleet: Fleet, schedule: DispatchSchedule, path, hour_offset: int = 0) -> None:
    """Per-generator per-hour rows followed by a totals footer."""
    q = schedule.output
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "generator_id", "output_mwh", "emission_ton", "cost"])
        for t in range(q.shape[1]):
            for j, gid in enumerate(schedule.generator_ids):
                x = float(q[j, t])
                w.writerow([t + hour_offset, gid, repr(x),
                            repr(x * float(fleet.emission[j])), repr(x * float(fleet.cost[j]))])
        w.writerow(["total", "", repr(float(q.sum())),
                    repr(schedule.total_emissions), repr(schedule.total_cost)])
