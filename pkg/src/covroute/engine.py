"""Discrete-time mesoscopic traffic engine.

Every vehicle on a road moves at that road's occupancy-dependent speed,
where the occupancy counts the other vehicles on the road, so a lone vehicle
drives at the limit.  At
the road's head it either finishes its trip or asks the router for the next
road, entering it only if the road has room.  Each step runs four phases in
a fixed order:

1. generate demand and let pending vehicles enter at their origin,
2. advance moving vehicles,
3. process vehicles waiting at road heads in ascending id order,
4. record occupancy and check load bookkeeping.

Simulation state lives in flat numpy arrays driven by numba kernels.  The
single-vehicle helpers (:func:`advance_vehicle`, :func:`cross_junction`,
:func:`spawn_vehicles`) use the same kernels on Python objects.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from covroute.netgraph import DEFAULT_SPEED_LIMIT, Network, all_pairs_distances
from covroute.routing import (
    Coverage,
    CoverageParams,
    DEST_UNREACHABLE,
    ETA_CRIT,
    NO_ROAD,
    SIGMA,
    RouterKind,
    net_arrays,
    phi_row,
    select_road,
)

PENDING = 0
MOVING = 1
WAITING = 2
ARRIVED = 3

STATE_NAMES = {PENDING: "pending", MOVING: "moving", WAITING: "waiting_at_head", ARRIVED: "arrived"}

V_MIN = 1.0

# counters layout
C_GENERATED, C_ENTERED, C_COMPLETED, C_DEFERRALS, C_VIOLATION = range(5)
OK, BAD_CONSERVATION, BAD_CAPACITY, BAD_DELAY, BAD_ROUTE = range(5)


class InvariantViolation(AssertionError):
    pass


@dataclass
class SimConfig:
    duration: float = 3600.0
    dt: float = 1.0
    lam: float = 1.0
    gen_mode: str = "constant"
    router: RouterKind = field(default_factory=Coverage)
    trip_mode: str = "uniform"
    fixed_od: tuple[int, int] | None = None
    seed: int = 0
    v_max: float = DEFAULT_SPEED_LIMIT
    v_min: float = V_MIN

    def validate(self, net: Network | None = None) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if self.gen_mode not in ("poisson", "constant"):
            raise ValueError(f"gen_mode must be poisson or constant, got {self.gen_mode!r}")
        if not self.v_max > self.v_min > 0:
            raise ValueError("need v_max > v_min > 0")
        if self.trip_mode not in ("uniform", "fixed"):
            raise ValueError(f"trip_mode must be uniform or fixed, got {self.trip_mode!r}")
        if self.trip_mode == "fixed":
            if self.fixed_od is None:
                raise ValueError("fixed trip mode needs fixed_od=(origin, dest)")
            o, d = self.fixed_od
            if o == d:
                raise ValueError("fixed_od origin and destination must differ")
            if net is not None and not (0 <= o < net.n_junctions and 0 <= d < net.n_junctions):
                raise ValueError("fixed_od refers to an unknown junction")
        if net is not None:
            if net.n_junctions < 2:
                raise ValueError("network needs at least two junctions")
            if not net.is_connected():
                raise ValueError("network must be connected")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class Vehicle:
    id: int
    origin: int
    dest: int
    current_road: int | None = None
    offset: float = 0.0
    spawn_time: float = 0.0
    state: str = "pending"


@dataclass
class TripRecord:
    vehicle_id: int
    origin: int
    dest: int
    spawn_time: float
    arrival_time: float | None
    free_flow_time: float
    entered: bool = True

    @property
    def completed(self) -> bool:
        return self.arrival_time is not None

    def delay(self, horizon: float) -> float:
        """Experienced minus free-flow time; a lower bound for censored trips."""
        if self.arrival_time is not None:
            return self.arrival_time - self.spawn_time - self.free_flow_time
        return max(0.0, horizon - self.spawn_time - self.free_flow_time)


@dataclass
class SimResult:
    trips: list[TripRecord]
    horizon: float
    generated: int
    entered: int
    completed: int
    in_flight: int
    pending: int
    deferrals: int
    occupancy_series: np.ndarray
    in_flight_series: np.ndarray

    @property
    def spawned(self) -> int:
        return self.generated

    @property
    def censored(self) -> int:
        return self.in_flight + self.pending


# --------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def speed_kernel(load, capacity, v_max, v_min):
    return max(v_min, v_max * (1.0 - load / capacity))


@numba.njit(cache=True)
def demand_count(t, lam, dt, poisson, rng):
    """Vehicles generated during step ``t``.

    Constant mode uses the running total ``floor((t + 1) * lam * dt)`` so
    fractional rates average out exactly.
    """
    if lam <= 0.0:
        return 0
    if poisson:
        return rng.poisson(lam * dt)
    return int(math.floor((t + 1) * lam * dt + 1e-9)) - int(math.floor(t * lam * dt + 1e-9))


@numba.njit(cache=True)
def draw_od(n_nodes, fixed_o, fixed_d, rng):
    if fixed_o >= 0:
        return fixed_o, fixed_d
    o = rng.integers(0, n_nodes)
    d = rng.integers(0, n_nodes - 1)
    if d >= o:
        d += 1
    return o, d


@numba.njit(cache=True)
def _spawn_phase(
    t, dt, lam, poisson, fixed_o, fixed_d, v_max,
    kind, alpha, eta_crit, sigma,
    out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
    dist, phis,
    v_origin, v_dest, v_road, v_offset, v_spawn, v_state, v_ff,
    pending, n_pending, onroad, n_onroad, merge_buf,
    counters, demand_rng, route_rng, iwork, fwork,
):
    """Generate this step's demand, then let pending vehicles (oldest first)
    enter at their origin.  Returns the new pending and on-road counts."""
    n_nodes = dist.shape[0]
    k = demand_count(t, lam, dt, poisson, demand_rng)
    for _ in range(k):
        i = counters[C_GENERATED]
        o, d = draw_od(n_nodes, fixed_o, fixed_d, demand_rng)
        v_origin[i] = o
        v_dest[i] = d
        v_road[i] = -1
        v_offset[i] = 0.0
        v_spawn[i] = t * dt
        v_state[i] = PENDING
        v_ff[i] = dist[d, o] / v_max
        pending[n_pending] = i
        n_pending += 1
        counters[C_GENERATED] += 1
    if n_pending == 0:
        return n_pending, n_onroad

    origin_full = np.zeros(n_nodes, dtype=np.bool_)
    for j in range(n_nodes):
        full = True
        for e in range(out_ptr[j], out_ptr[j + 1]):
            if load[out_roads[e]] < road_cap[out_roads[e]]:
                full = False
                break
        origin_full[j] = full

    n_new = 0
    kept = 0
    for a in range(n_pending):
        i = pending[a]
        r = NO_ROAD
        if not origin_full[v_origin[i]]:
            d = v_dest[i]
            r = select_road(
                kind, v_origin[i], -1, True,
                out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
                dist[d], phis[d], alpha, eta_crit, sigma, route_rng, iwork, fwork,
            )
        if r < 0:
            origin_full[v_origin[i]] = True
            counters[C_DEFERRALS] += 1
            pending[kept] = i
            kept += 1
            continue
        load[r] += 1
        v_road[i] = r
        v_offset[i] = 0.0
        v_state[i] = MOVING
        counters[C_ENTERED] += 1
        merge_buf[n_new] = i
        n_new += 1

    # merge newly entered ids into the on-road list, keeping ascending order
    if n_new > 0:
        a = n_onroad - 1
        b = n_new - 1
        w = n_onroad + n_new - 1
        while b >= 0:
            if a >= 0 and onroad[a] > merge_buf[b]:
                onroad[w] = onroad[a]
                a -= 1
            else:
                onroad[w] = merge_buf[b]
                b -= 1
            w -= 1
    return kept, n_onroad + n_new


@numba.njit(cache=True)
def _advance_phase(dt, v_max, v_min, road_len, road_vmax, road_cap, load, v_road, v_offset, v_state, onroad, n_onroad):
    speed = np.empty(load.shape[0])
    for r in range(load.shape[0]):
        # occupancy seen by a vehicle on r excludes the vehicle itself
        speed[r] = speed_kernel(max(load[r] - 1, 0), road_cap[r], min(v_max, road_vmax[r]), v_min)
    for a in range(n_onroad):
        i = onroad[a]
        if v_state[i] != MOVING:
            continue
        r = v_road[i]
        pos = v_offset[i] + speed[r] * dt
        if pos >= road_len[r]:
            pos = road_len[r]
            v_state[i] = WAITING
        v_offset[i] = pos


@numba.njit(cache=True)
def _cross_phase(
    t, dt, kind, alpha, eta_crit, sigma,
    out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
    dist, phis,
    v_dest, v_road, v_offset, v_spawn, v_state, v_arrival, v_ff,
    onroad, n_onroad, counters, route_rng, iwork, fwork,
):
    for a in range(n_onroad):
        i = onroad[a]
        if v_state[i] != WAITING:
            continue
        r = v_road[i]
        j = road_dst[r]
        d = v_dest[i]
        if j == d:
            load[r] -= 1
            v_state[i] = ARRIVED
            v_arrival[i] = (t + 1) * dt
            counters[C_COMPLETED] += 1
            if v_arrival[i] - v_spawn[i] < v_ff[i] - 1e-9:
                counters[C_VIOLATION] = BAD_DELAY
            continue
        nxt = select_road(
            kind, j, r, False,
            out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
            dist[d], phis[d], alpha, eta_crit, sigma, route_rng, iwork, fwork,
        )
        if nxt < 0:
            counters[C_VIOLATION] = BAD_ROUTE
            continue
        if load[nxt] >= road_cap[nxt]:
            continue
        load[r] -= 1
        load[nxt] += 1
        v_road[i] = nxt
        v_offset[i] = 0.0
        v_state[i] = MOVING


@numba.njit(cache=True)
def _record_phase(t, road_cap, load, v_state, onroad, n_onroad, counters, occ_series, flight_series):
    total = 0
    occ = 0.0
    for r in range(load.shape[0]):
        total += load[r]
        occ += load[r] / road_cap[r]
        if load[r] > road_cap[r] or load[r] < 0:
            counters[C_VIOLATION] = BAD_CAPACITY
    occ_series[t] = occ / load.shape[0]
    flight_series[t] = total
    if total != counters[C_ENTERED] - counters[C_COMPLETED]:
        counters[C_VIOLATION] = BAD_CONSERVATION
    # drop arrived vehicles, keeping ascending id order
    m = 0
    for a in range(n_onroad):
        i = onroad[a]
        if v_state[i] != ARRIVED:
            onroad[m] = i
            m += 1
    return m


@numba.njit(cache=True)
def _run_steps(
    t0, n_steps, margin,
    dt, lam, poisson, fixed_o, fixed_d, v_max, v_min,
    kind, alpha, eta_crit, sigma,
    out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, road_vmax, load,
    dist, phis,
    v_origin, v_dest, v_road, v_offset, v_spawn, v_state, v_arrival, v_ff,
    pending, n_pending, onroad, n_onroad, merge_buf,
    counters, demand_rng, route_rng, iwork, fwork,
    occ_series, flight_series,
):
    """Run up to ``n_steps`` steps from ``t0``.

    Stops early when the vehicle arrays could overflow during the next step
    or an invariant is violated.  Returns ``(t, n_pending, n_onroad)``.
    """
    t = t0
    while t < t0 + n_steps:
        if counters[C_GENERATED] + margin > v_origin.shape[0]:
            break
        n_pending, n_onroad = _spawn_phase(
            t, dt, lam, poisson, fixed_o, fixed_d, v_max,
            kind, alpha, eta_crit, sigma,
            out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
            dist, phis,
            v_origin, v_dest, v_road, v_offset, v_spawn, v_state, v_ff,
            pending, n_pending, onroad, n_onroad, merge_buf,
            counters, demand_rng, route_rng, iwork, fwork,
        )
        _advance_phase(dt, v_max, v_min, road_len, road_vmax, road_cap, load, v_road, v_offset, v_state, onroad, n_onroad)
        _cross_phase(
            t, dt, kind, alpha, eta_crit, sigma,
            out_ptr, out_roads, road_dst, road_len, road_rev, road_cap, load,
            dist, phis,
            v_dest, v_road, v_offset, v_spawn, v_state, v_arrival, v_ff,
            onroad, n_onroad, counters, route_rng, iwork, fwork,
        )
        n_onroad = _record_phase(t, road_cap, load, v_state, onroad, n_onroad, counters, occ_series, flight_series)
        t += 1
        if counters[C_VIOLATION] != OK:
            break
    return t, n_pending, n_onroad


# --------------------------------------------------------------------------
# simulation


_VIOLATION_TEXT = {
    BAD_CONSERVATION: "sum of road loads differs from vehicles in flight",
    BAD_CAPACITY: "road load outside [0, capacity]",
    BAD_DELAY: "trip finished faster than free-flow time",
    BAD_ROUTE: "router found no exit toward the destination",
}


class Simulation:
    """One run of the engine on a network.

    The network's own road ``load`` fields are left untouched; the run owns
    its load array (:attr:`load`).
    """

    def __init__(self, cfg: SimConfig, net: Network):
        cfg.validate(net)
        self.cfg = cfg
        self.net = net
        self.t = 0
        arr = net_arrays(net)
        self.arr = arr
        self.road_vmax = np.array([r.speed_limit for r in net.roads], dtype=float)
        self.load = np.zeros(len(net.roads), dtype=np.int64)
        self.iwork, self.fwork = arr.work_buffers()
        # dist[d, v]: distance from v to destination d
        self.dist = all_pairs_distances(net)
        router = cfg.router
        self.kind = router.code
        params = router.params if isinstance(router, Coverage) else CoverageParams(1.0, ETA_CRIT, SIGMA)
        self.alpha, self.eta_crit, self.sigma = float(params.alpha), float(params.eta_crit), float(params.sigma)
        if self.kind == Coverage.code:
            self.phis = np.array([phi_row(self.dist[d], arr.road_dst, arr.road_len, arr.max_edge_length) for d in range(net.n_junctions)])
        else:
            self.phis = np.zeros((net.n_junctions, len(net.roads)))
        self.poisson = cfg.gen_mode == "poisson"
        o, d = cfg.fixed_od if cfg.trip_mode == "fixed" else (-1, -1)
        self.fixed_o, self.fixed_d = int(o), int(d)
        demand_seq, route_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.demand_rng = np.random.default_rng(demand_seq)
        self.route_rng = np.random.default_rng(route_seq)

        size = max(64, int(cfg.lam * cfg.duration * 1.1) + 64)
        self.v_origin = np.zeros(size, dtype=np.int64)
        self.v_dest = np.zeros(size, dtype=np.int64)
        self.v_road = np.full(size, -1, dtype=np.int64)
        self.v_offset = np.zeros(size)
        self.v_spawn = np.zeros(size)
        self.v_state = np.zeros(size, dtype=np.int64)
        self.v_arrival = np.full(size, np.nan)
        self.v_ff = np.zeros(size)
        self.pending = np.zeros(size, dtype=np.int64)
        self.onroad = np.zeros(size, dtype=np.int64)
        self.merge_buf = np.zeros(size, dtype=np.int64)
        self.n_pending = 0
        self.n_onroad = 0
        self.counters = np.zeros(5, dtype=np.int64)
        n = cfg.n_steps
        self.occupancy_series = np.zeros(n)
        self.in_flight_series = np.zeros(n, dtype=np.int64)

    def _margin(self) -> int:
        rate = self.cfg.lam * self.cfg.dt
        # a Poisson draw exceeding this is astronomically unlikely; the
        # kernel re-checks before every step anyway
        return int(10 * rate + 10 * math.sqrt(rate) + 16)

    def _grow(self) -> None:
        size = len(self.v_origin)
        new = max(int(self.counters[C_GENERATED]) + self._margin(), 2 * size)
        for name in ("v_origin", "v_dest", "v_road", "v_offset", "v_spawn", "v_state", "v_arrival", "v_ff", "pending", "onroad", "merge_buf"):
            old = getattr(self, name)
            fill = np.nan if name == "v_arrival" else (-1 if name == "v_road" else 0)
            grown = np.full(new, fill, dtype=old.dtype)
            grown[:size] = old
            setattr(self, name, grown)

    @property
    def done(self) -> bool:
        return self.t >= self.cfg.n_steps

    def advance(self, n_steps: int | None = None) -> None:
        """Run ``n_steps`` steps (default: to the horizon)."""
        remaining = self.cfg.n_steps - self.t
        target = self.t + (remaining if n_steps is None else min(n_steps, remaining))
        cfg, arr = self.cfg, self.arr
        while self.t < target:
            t_before = self.t
            self.t, self.n_pending, self.n_onroad = _run_steps(
                self.t, target - self.t, self._margin(),
                float(cfg.dt), float(cfg.lam), self.poisson, self.fixed_o, self.fixed_d, float(cfg.v_max), float(cfg.v_min),
                self.kind, self.alpha, self.eta_crit, self.sigma,
                arr.out_ptr, arr.out_roads, arr.road_dst, arr.road_len, arr.road_rev, arr.road_cap, self.road_vmax, self.load,
                self.dist, self.phis,
                self.v_origin, self.v_dest, self.v_road, self.v_offset, self.v_spawn, self.v_state, self.v_arrival, self.v_ff,
                self.pending, self.n_pending, self.onroad, self.n_onroad, self.merge_buf,
                self.counters, self.demand_rng, self.route_rng, self.iwork, self.fwork,
                self.occupancy_series, self.in_flight_series,
            )
            code = int(self.counters[C_VIOLATION])
            if code != OK:
                raise InvariantViolation(f"step {self.t - 1}: {_VIOLATION_TEXT[code]}")
            if self.t == t_before:
                self._grow()

    def step(self) -> None:
        if self.done:
            raise RuntimeError("simulation horizon reached")
        self.advance(1)

    def vehicles(self) -> list[Vehicle]:
        """Snapshot of every vehicle generated so far."""
        out = []
        for i in range(int(self.counters[C_GENERATED])):
            road = int(self.v_road[i])
            out.append(Vehicle(
                id=i,
                origin=int(self.v_origin[i]),
                dest=int(self.v_dest[i]),
                current_road=None if road < 0 else road,
                offset=float(self.v_offset[i]),
                spawn_time=float(self.v_spawn[i]),
                state=STATE_NAMES[int(self.v_state[i])],
            ))
        return out

    def result(self) -> SimResult:
        n = int(self.counters[C_GENERATED])
        trips = []
        for i in range(n):
            arrival = float(self.v_arrival[i]) if self.v_state[i] == ARRIVED else None
            trips.append(TripRecord(
                vehicle_id=i,
                origin=int(self.v_origin[i]),
                dest=int(self.v_dest[i]),
                spawn_time=float(self.v_spawn[i]),
                arrival_time=arrival,
                free_flow_time=float(self.v_ff[i]),
                entered=bool(self.v_state[i] != PENDING),
            ))
        states = self.v_state[:n]
        return SimResult(
            trips=trips,
            horizon=self.t * self.cfg.dt,
            generated=n,
            entered=int(self.counters[C_ENTERED]),
            completed=int(self.counters[C_COMPLETED]),
            in_flight=int(np.sum((states == MOVING) | (states == WAITING))),
            pending=int(np.sum(states == PENDING)),
            deferrals=int(self.counters[C_DEFERRALS]),
            occupancy_series=self.occupancy_series[: self.t].copy(),
            in_flight_series=self.in_flight_series[: self.t].copy(),
        )


def step(sim: Simulation) -> Simulation:
    sim.step()
    return sim


def run(cfg: SimConfig, net: Network) -> SimResult:
    sim = Simulation(cfg, net)
    sim.advance()
    return sim.result()


# --------------------------------------------------------------------------
# single-vehicle helpers


def speed_on_road(road, cfg: SimConfig) -> float:
    return speed_kernel(road.load, road.capacity, min(cfg.v_max, road.speed_limit), cfg.v_min)


def spawn_vehicles(t: int, cfg: SimConfig, net: Network, rng: np.random.Generator, first_id: int = 0) -> list[Vehicle]:
    """New demand for step ``t``: vehicles with their O-D pairs, not yet placed."""
    cfg.validate()
    o_fix, d_fix = cfg.fixed_od if cfg.trip_mode == "fixed" else (-1, -1)
    k = demand_count(t, float(cfg.lam), float(cfg.dt), cfg.gen_mode == "poisson", rng)
    out = []
    for n in range(k):
        o, d = draw_od(net.n_junctions, o_fix, d_fix, rng)
        out.append(Vehicle(first_id + n, int(o), int(d), spawn_time=t * cfg.dt))
    return out


def advance_vehicle(vehicle: Vehicle, net: Network, cfg: SimConfig) -> Vehicle:
    """One step of movement; ``road.load`` is taken to include ``vehicle``."""
    if vehicle.state != "moving":
        return vehicle
    road = net.roads[vehicle.current_road]
    others = replace(road, load=max(road.load - 1, 0))
    pos = vehicle.offset + speed_on_road(others, cfg) * cfg.dt
    if pos >= road.length:
        return replace(vehicle, offset=road.length, state="waiting_at_head")
    return replace(vehicle, offset=pos)


def cross_junction(vehicle: Vehicle, net: Network, router: RouterKind, dist_maps, rng: np.random.Generator) -> Vehicle:
    """Move a vehicle waiting at a road head onward, updating road loads.

    ``dist_maps[d]`` is the distance map toward destination ``d``.  A vehicle
    whose chosen road is full stays where it is.
    """
    if vehicle.state != "waiting_at_head":
        return vehicle
    road = net.roads[vehicle.current_road]
    if road.dst == vehicle.dest:
        road.load -= 1
        return replace(vehicle, state="arrived")
    arr = net_arrays(net)
    dist_row = np.asarray(dist_maps[vehicle.dest], dtype=float)
    if isinstance(router, Coverage):
        p = router.params
        phis = phi_row(dist_row, arr.road_dst, arr.road_len, arr.max_edge_length)
        alpha, eta_crit, sigma = p.alpha, p.eta_crit, p.sigma
    else:
        phis = np.zeros(len(net.roads))
        alpha, eta_crit, sigma = 1.0, ETA_CRIT, SIGMA
    load = np.array([r.load for r in net.roads], dtype=np.int64)
    nxt = select_road(
        router.code, road.dst, road.id, False,
        arr.out_ptr, arr.out_roads, arr.road_dst, arr.road_len, arr.road_rev, arr.road_cap, load,
        dist_row, phis, float(alpha), float(eta_crit), float(sigma), rng, *arr.work_buffers(),
    )
    if nxt == DEST_UNREACHABLE or nxt == NO_ROAD:
        raise ValueError(f"no route from junction {road.dst} to {vehicle.dest}")
    target = net.roads[nxt]
    if target.load >= target.capacity:
        return vehicle
    road.load -= 1
    target.load += 1
    return replace(vehicle, current_road=int(nxt), offset=0.0, state="moving")


# --------------------------------------------------------------------------
# trip log

TRIP_LOG_COLUMNS = ("vehicle_id", "origin", "dest", "spawn_time", "arrival_time", "free_flow_time")


def write_trip_log(result: SimResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIP_LOG_COLUMNS)
        for tr in result.trips:
            arrival = "CENSORED" if tr.arrival_time is None else repr(tr.arrival_time)
            w.writerow([tr.vehicle_id, tr.origin, tr.dest, repr(tr.spawn_time), arrival, repr(tr.free_flow_time)])


def read_trip_log(path) -> list[TripRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            arrival = None if row["arrival_time"] == "CENSORED" else float(row["arrival_time"])
            out.append(TripRecord(
                int(row["vehicle_id"]), int(row["origin"]), int(row["dest"]),
                float(row["spawn_time"]), arrival, float(row["free_flow_time"]),
            ))
    return out
