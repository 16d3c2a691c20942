"""Emission-oriented charging.

Phase 1 picks the aggregate EV profile G*(t) that minimizes total dispatch
emissions subject to the hourly charging capability and the total energy
request. Phase 2 spreads G*(t) over individual vehicles, minimizing the
absolute hourly deviation from G*.

Two phase-1 backends share one discretization (steps of ``delta`` MWh):

* ``dp``: forward dynamic program over cumulative allocated energy. Each
  state carries the stack output of the path that reached it, so ramp limits
  are threaded along kept paths only. Exact on the grid when no ramp binds.
* ``exact``: depth-first enumeration of every grid allocation, each scored by
  full dispatch. Guarded to desk-sized instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .direct import ChargingProfile, check_horizon, direct_profile
from .dispatch import DispatchSchedule, _Kernel, dispatch
from .errors import (
    ContractError,
    DomainError,
    InfeasibleError,
    InstanceTooLargeError,
)
from .grid import Fleet
from .sessions import ChargingSession

BACKENDS = ("dp", "exact")
EXACT_MAX_GENERATORS = 4
EXACT_MAX_HOURS = 8
EXACT_MAX_STATES = 10**6
BALANCE_TOL = 1e-6


@dataclass(frozen=True)
class GreenSolution:
    aggregate: np.ndarray
    schedule: DispatchSchedule
    profile: ChargingProfile
    dispersal_residual: float
    solver_backend: str
    discretization_mwh: float
    used_direct_incumbent: bool = False

    @property
    def total_emissions(self) -> float:
        return self.schedule.total_emissions


def availability(sessions: Sequence[ChargingSession], horizon: int) -> np.ndarray:
    """N x T indicator, 1 while the vehicle is plugged in."""
    mask = np.zeros((len(sessions), horizon), dtype=bool)
    for i, s in enumerate(sessions):
        mask[i, s.arrival : s.departure] = True
    mask.setflags(write=False)
    return mask


def charging_capability(sessions: Sequence[ChargingSession], horizon: int) -> np.ndarray:
    """Upper bound on aggregate charging per hour (sum of plugged-in rates)."""
    if not sessions:
        return np.zeros(horizon)
    a = np.array([s.arrival for s in sessions])
    d = np.array([s.departure for s in sessions])
    m = np.array([s.max_rate for s in sessions])
    # difference array: +m at arrival, -m at departure
    steps = np.bincount(a, m, horizon + 1) - np.bincount(d, m, horizon + 1)
    return np.maximum(np.cumsum(steps)[:horizon], 0.0)


@dataclass(frozen=True)
class _Grid:
    caps: np.ndarray  # MWh per hour
    units: np.ndarray  # caps in whole delta steps
    total: float  # sum of energy requests
    k_target: int  # total in delta steps, capped by sum(units)
    delta: float


def _discretize(sessions, horizon, delta) -> _Grid:
    if not delta > 0:
        raise DomainError("discretization step must be positive")
    caps = charging_capability(sessions, horizon)
    units = np.floor(caps / delta + 1e-9).astype(np.int64)
    total = math.fsum(s.energy_request for s in sessions)
    if total > caps.sum() * (1 + 1e-12) + 1e-12:
        raise InfeasibleError(
            f"energy requests {total:.6g} MWh exceed charging capability {caps.sum():.6g} MWh"
        )
    k_target = min(int(round(total / delta)), int(units.sum()))
    return _Grid(caps, units, total, k_target, float(delta))


def _reconcile(units: np.ndarray, grid: _Grid) -> np.ndarray:
    """Scale grid units to MWh and push the sub-step remainder into the
    highest-allocation hours, within each hour's charging capability."""
    g = units * grid.delta
    residual = grid.total - g.sum()
    order = sorted(range(len(g)), key=lambda t: (-g[t], t))
    if residual > 0:
        for t in order:
            add = min(grid.caps[t] - g[t], residual)
            if add > 0:
                g[t] += add
                residual -= add
            if residual <= 0:
                break
    elif residual < 0:
        for t in order:
            take = min(g[t], -residual)
            g[t] -= take
            residual += take
            if residual >= 0:
                break
    if abs(residual) > 1e-9 * (1 + grid.total):
        raise InfeasibleError(f"cannot place {residual:.6g} MWh within charging capability")
    return g


def _segment_emissions(dprime, hprev, h, theta):
    """Emissions of filling ``dprime`` MWh above the floors, for every
    (state, action) pair. Rows are states with their own stack headroom."""
    H = hprev + h
    dmin = dprime.min(axis=1, keepdims=True)
    dmax = dprime.max(axis=1, keepdims=True)
    active = np.any((hprev < dmax) & (H > dmin), axis=0)
    full = (H <= dmin) & ~active[None, :]
    out = ((h * full) @ theta)[:, None] + np.zeros_like(dprime)
    for j in np.flatnonzero(active):
        out += theta[j] * np.clip(dprime - hprev[:, j : j + 1], 0.0, h[:, j : j + 1])
    return out


def optimize_aggregate_dp(
    fleet: Fleet, load: Sequence[float], sessions: Sequence[ChargingSession], delta: float
) -> np.ndarray:
    """Aggregate EV profile minimizing emissions, by forward DP on a delta grid.

    Ties between equal-emission paths go to the lexicographically smallest
    allocation vector.
    """
    load = np.asarray(load, dtype=float)
    T = len(load)
    check_horizon(sessions, T)
    grid = _discretize(sessions, T, delta)
    K = grid.k_target
    P, r, theta = fleet.capacity, fleet.ramp, fleet.emission
    J = len(fleet)
    suffix = np.concatenate([np.cumsum(grid.units[::-1])[::-1], [0]])

    cost = np.full(K + 1, np.inf)
    cost[0] = 0.0
    rank = np.zeros(K + 1, dtype=np.int64)
    prev_out = np.zeros((K + 1, J))
    parents, choices = [], []

    for t in range(T):
        alive = np.flatnonzero(np.isfinite(cost))
        if t == 0:
            floors = np.zeros((len(alive), J))
            h = np.broadcast_to(P, (len(alive), J)).copy()
        else:
            Q = prev_out[alive]
            hi = np.minimum(P, Q + r)
            floors = np.maximum(0.0, Q - r)
            h = hi - floors
        hprev = np.cumsum(h, axis=1) - h
        top = h.sum(axis=1)
        fsum = floors.sum(axis=1)
        xs = np.arange(grid.units[t] + 1)
        dprime = load[t] + xs[None, :] * delta - fsum[:, None]
        tol = 1e-9 * (1.0 + load[t] + xs[-1] * delta)
        stage = (floors @ theta)[:, None] + _segment_emissions(dprime, hprev, h, theta) if J else np.zeros_like(dprime)
        stage[(dprime < -tol) | (dprime > top[:, None] + tol)] = np.inf

        best = np.full(K + 1, np.inf)
        best_rank = np.full(K + 1, np.iinfo(np.int64).max)
        best_row = np.full(K + 1, -1)
        best_x = np.full(K + 1, -1)
        base = cost[alive]
        prank = rank[alive]
        for x in xs:
            kk = alive + x
            keep = (kk <= K) & (kk + suffix[t + 1] >= K)
            if not keep.any():
                continue
            rows = np.flatnonzero(keep)
            kk = kk[keep]
            cand = base[rows] + stage[rows, x]
            cur = best[kk]
            slack = 1e-9 * (1.0 + np.abs(np.where(np.isfinite(cur), cur, 0.0)))
            better = np.isfinite(cand) & (
                (cand < cur - slack) | ((cand <= cur + slack) & (prank[rows] < best_rank[kk]))
            )
            kk, rows = kk[better], rows[better]
            best[kk] = cand[better]
            best_rank[kk] = prank[rows]
            best_row[kk] = rows
            best_x[kk] = x

        reached = np.flatnonzero(np.isfinite(best))
        if len(reached) == 0:
            raise InfeasibleError("no feasible EV allocation keeps dispatch feasible", hour=t)
        pr, px = best_row[reached], best_x[reached]
        dp_ = dprime[pr, px]
        new_out = np.zeros((K + 1, J))
        new_out[reached] = floors[pr] + np.clip(dp_[:, None] - hprev[pr], 0.0, h[pr])
        new_rank = np.zeros(K + 1, dtype=np.int64)
        order = np.lexsort((px, best_rank[reached]))
        new_rank[reached[order]] = np.arange(len(reached))

        parents.append(np.where(best_row >= 0, alive[np.maximum(best_row, 0)], -1))
        choices.append(best_x)
        cost, rank, prev_out = best, new_rank, new_out

    if not np.isfinite(cost[K]):
        raise InfeasibleError("no allocation delivers the requested energy")
    units = np.zeros(T, dtype=np.int64)
    k = K
    for t in range(T - 1, -1, -1):
        units[t] = choices[t][k]
        k = parents[t][k]
    return _reconcile(units, grid)


def _count_allocations(units, K, limit):
    """Number of grid allocations summing to K, saturating at ``limit + 1``."""
    ways = [1] + [0] * K
    for u in units:
        nxt = [0] * (K + 1)
        for k, w in enumerate(ways):
            if w:
                for x in range(min(int(u), K - k) + 1):
                    nxt[k + x] += w
        ways = [min(w, limit + 1) for w in nxt]
    return ways[K]


def optimize_aggregate_exact(
    fleet: Fleet,
    load: Sequence[float],
    sessions: Sequence[ChargingSession],
    delta: float,
    max_states: int = EXACT_MAX_STATES,
) -> np.ndarray:
    """Global minimizer over the delta grid, by exhaustive depth-first search.

    Allocations are visited in lexicographic order and only strict
    improvements replace the incumbent, so ties resolve to the first one.
    """
    load = np.asarray(load, dtype=float)
    T = len(load)
    if len(fleet) > EXACT_MAX_GENERATORS or T > EXACT_MAX_HOURS:
        raise InstanceTooLargeError(
            f"exact backend handles at most {EXACT_MAX_GENERATORS} generators and "
            f"{EXACT_MAX_HOURS} hours; use the dp backend"
        )
    check_horizon(sessions, T)
    grid = _discretize(sessions, T, delta)
    K = grid.k_target
    n = _count_allocations(grid.units, K, max_states)
    if n > max_states:
        raise InstanceTooLargeError(
            f"more than {max_states} grid allocations to enumerate; use the dp backend"
        )
    kernel = _Kernel(fleet)
    units = [int(u) for u in grid.units]
    suffix = [sum(units[t:]) for t in range(T)] + [0]
    loads = load.tolist()
    x = [0] * T
    best = [math.inf, None]
    failure = [None]

    def search(t, k, prev, acc):
        if acc >= best[0] - 1e-9 * (1 + abs(best[0] if best[0] < math.inf else 0)):
            return
        if t == T:
            best[0], best[1] = acc, list(x)
            return
        lo = max(0, K - k - suffix[t + 1])
        for xt in range(lo, min(units[t], K - k) + 1):
            try:
                e, q = kernel(prev, loads[t] + xt * delta, hour=t)
            except InfeasibleError as exc:
                failure[0] = exc
                continue
            x[t] = xt
            search(t + 1, k + xt, q, acc + e)

    search(0, 0, None, 0.0)
    if best[1] is None:
        raise failure[0] or InfeasibleError("no allocation delivers the requested energy")
    return _reconcile(np.array(best[1], dtype=np.int64), grid)


def optimize_aggregate(fleet, load, sessions, delta, backend="dp"):
    if backend == "dp":
        return optimize_aggregate_dp(fleet, load, sessions, delta)
    if backend == "exact":
        return optimize_aggregate_exact(fleet, load, sessions, delta)
    raise DomainError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def disperse(G_star: Sequence[float], sessions: Sequence[ChargingSession]) -> tuple[ChargingProfile, float]:
    """Assign the aggregate profile to vehicles with least total |deviation|.

    Vehicles sharing (arrival, departure, rate, energy) are interchangeable,
    so the transportation problem is solved per class and split evenly.
    Deviation is priced on an hourly overflow arc; with total supply equal to
    total target, the L1 residual is twice the overflow.
    """
    G = np.asarray(G_star, dtype=float)
    T = len(G)
    check_horizon(sessions, T)
    if np.any(G < -BALANCE_TOL):
        raise DomainError("aggregate target has negative hours")
    G = np.maximum(G, 0.0)
    total = math.fsum(s.energy_request for s in sessions)
    if abs(total - G.sum()) > BALANCE_TOL:
        raise ContractError(
            f"aggregate target {G.sum():.9g} MWh differs from requested energy {total:.9g} MWh"
        )
    ids = [s.vehicle_id for s in sessions]
    if not sessions:
        profile = ChargingProfile.from_rows([], np.zeros((0, T)), T)
        return profile, float(np.abs(G).sum())

    classes: dict[tuple, list[int]] = {}
    for i, s in enumerate(sessions):
        classes.setdefault((s.arrival, s.departure, s.max_rate, s.energy_request), []).append(i)
    keys = sorted(classes)

    # variables: class-hour flows, then u_t (matched, <= G_t), then o_t (overflow)
    col = 0
    flow_cols = []
    rows_i, cols_i, vals = [], [], []
    bounds = []
    b_eq = []
    for c, key in enumerate(keys):
        a, d, m, e = key
        n = len(classes[key])
        cols = list(range(col, col + d - a))
        flow_cols.append(cols)
        for j, t in zip(cols, range(a, d)):
            rows_i += [c, len(keys) + t]
            cols_i += [j, j]
            vals += [1.0, 1.0]
            bounds.append((0.0, n * m))
        col += d - a
        b_eq.append(n * e)
    u0 = col
    o0 = col + T
    for t in range(T):
        rows_i += [len(keys) + t, len(keys) + t]
        cols_i += [u0 + t, o0 + t]
        vals += [-1.0, -1.0]
    bounds += [(0.0, float(g)) for g in G] + [(0.0, None)] * T
    b_eq += [0.0] * T
    n_var = o0 + T
    A = coo_matrix((vals, (rows_i, cols_i)), shape=(len(keys) + T, n_var)).tocsr()
    c_obj = np.zeros(n_var)
    c_obj[o0:] = 1.0
    res = linprog(c_obj, A_eq=A, b_eq=np.array(b_eq), bounds=bounds, method="highs")
    if res.status != 0:
        raise InfeasibleError(f"dispersal flow problem failed: {res.message}")

    rows = np.zeros((len(sessions), T))
    for key, cols in zip(keys, flow_cols):
        a, d, m, e = key
        members = classes[key]
        share = _repair(res.x[cols] / len(members), m, e)
        rows[members, a:d] = share
    profile = ChargingProfile.from_rows(ids, rows, T)
    residual = float(np.abs(profile.aggregate - G).sum())
    return profile, residual


def _repair(v, m, e):
    """Snap one vehicle's hourly vector back onto [0, m] with sum exactly e."""
    v = np.clip(v, 0.0, m) + 0.0  # drops -0.0 from the LP
    diff = e - v.sum()
    if diff > 0:
        for t in np.argsort(-(m - v), kind="stable"):
            add = min(m - v[t], diff)
            v[t] += add
            diff -= add
            if diff <= 0:
                break
    elif diff < 0:
        for t in np.argsort(-v, kind="stable"):
            take = min(v[t], -diff)
            v[t] -= take
            diff += take
            if diff >= 0:
                break
    return v


def green_run(
    fleet: Fleet,
    load: Sequence[float],
    sessions: Sequence[ChargingSession],
    backend: str = "dp",
    delta: float = 1.0,
) -> GreenSolution:
    """Optimize the aggregate, dispatch it, then disperse to vehicles.

    The direct-charging profile is a feasible aggregate as well; it is kept
    as an incumbent and used whenever it dispatches with lower emissions than
    the optimizer's grid answer (or the optimizer finds nothing feasible).
    """
    load = np.asarray(load, dtype=float)
    T = len(load)
    try:
        G = optimize_aggregate(fleet, load, sessions, delta, backend)
        schedule = dispatch(fleet, load + G)
        phase1_error = None
    except InfeasibleError as exc:
        G, schedule, phase1_error = None, None, exc

    direct = direct_profile(sessions, T)
    try:
        direct_schedule = dispatch(fleet, load + direct.aggregate)
    except InfeasibleError:
        direct_schedule = None

    used_direct = False
    if direct_schedule is not None and (
        schedule is None or direct_schedule.total_emissions < schedule.total_emissions - 1e-9
    ):
        G, schedule, used_direct = np.array(direct.aggregate), direct_schedule, True
    elif schedule is None:
        raise phase1_error

    caps = charging_capability(sessions, T)
    assert np.all(G <= caps + 1e-9), "aggregate exceeds charging capability"
    assert abs(G.sum() - math.fsum(s.energy_request for s in sessions)) <= BALANCE_TOL

    profile, residual = disperse(G, sessions)
    return GreenSolution(
        aggregate=G,
        schedule=schedule,
        profile=profile,
        dispersal_residual=residual,
        solver_backend=backend,
        discretization_mwh=float(delta),
        used_direct_incumbent=used_direct,
    )
