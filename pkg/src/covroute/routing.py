"""Coverage-based routing cost and the shortest-path baseline routers.

At a junction a coverage-routed vehicle scores every candidate exit road by

    J = alpha * phi + (1 - alpha) * rho

where ``phi`` is the normalised remaining distance to the destination via
that road and ``rho`` a saturating penalty on the road's occupancy, and
takes the minimiser.  ``alpha = 1`` reduces to shortest-path routing and
``alpha = 0`` to pure congestion avoidance.

The selection kernels are compiled with numba and shared by the Python API
below and the simulation engine, so both follow one code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from covroute.netgraph import Network, Road

ETA_CRIT = 0.2
SIGMA = 10.0

COST_TIE_TOL = 1e-12
# distances are sums of road lengths; compare them with a relative tolerance
DIST_TIE_RTOL = 1e-9

KIND_COVERAGE = 0
KIND_SHORTEST = 1
KIND_MODIFIED = 2

NO_ROAD = -1
DEST_UNREACHABLE = -2


@dataclass(frozen=True)
class CoverageParams:
    alpha: float = 0.9
    eta_crit: float = ETA_CRIT
    sigma: float = SIGMA

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.eta_crit < 1.0:
            raise ValueError(f"eta_crit must lie in (0, 1), got {self.eta_crit}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Coverage:
    params: CoverageParams = field(default_factory=CoverageParams)
    code = KIND_COVERAGE
    label = "coverage"

    @property
    def alpha(self) -> float:
        return self.params.alpha


@dataclass(frozen=True)
class ShortestPath:
    code = KIND_SHORTEST
    label = "sp"


@dataclass(frozen=True)
class ModifiedShortestPath:
    code = KIND_MODIFIED
    label = "msp"


RouterKind = Coverage | ShortestPath | ModifiedShortestPath


def router_from_name(name: str, alpha: float | None = None, eta_crit: float = ETA_CRIT, sigma: float = SIGMA) -> RouterKind:
    if name == "coverage":
        return Coverage(CoverageParams(0.9 if alpha is None else alpha, eta_crit, sigma))
    if name == "sp":
        return ShortestPath()
    if name == "msp":
        return ModifiedShortestPath()
    raise ValueError(f"unknown router {name!r}; expected coverage, sp or msp")


@dataclass(frozen=True)
class NormConstants:
    max_dest_distance: float
    max_edge_length: float


@dataclass(frozen=True)
class CostBreakdown:
    road: int
    phi: float
    rho: float
    j_cost: float


# --------------------------------------------------------------------------
# scalar kernels


@numba.njit(cache=True)
def rho_kernel(eta, eta_crit, sigma):
    if eta < eta_crit:
        return eta
    return 1.0 - math.exp(-sigma * eta)


@numba.njit(cache=True)
def cost_kernel(phi_val, rho_val, alpha):
    return alpha * phi_val + (1.0 - alpha) * rho_val


def rho(eta: float, params: CoverageParams = CoverageParams()) -> float:
    """Congestion penalty of a road at occupancy ``eta``.

    Linear below ``eta_crit`` and ``1 - exp(-sigma * eta)`` from there on;
    the jump at ``eta_crit`` is deliberate.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"occupancy must lie in [0, 1], got {eta}")
    return rho_kernel(float(eta), params.eta_crit, params.sigma)


def cost(phi_val: float, rho_val: float, alpha: float) -> float:
    for name, v in (("phi", phi_val), ("rho", rho_val), ("alpha", alpha)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return cost_kernel(float(phi_val), float(rho_val), float(alpha))


def norm_constants(net: Network, dist_map) -> NormConstants:
    finite = [d for d in dist_map if math.isfinite(d)]
    return NormConstants(
        max_dest_distance=max(finite),
        max_edge_length=max(r.length for r in net.roads),
    )


def phi(dist_map, road: Road, norms: NormConstants) -> float:
    """Normalised distance to the destination when leaving via ``road``.

    Returns 1.0 when the destination cannot be reached from the road's head;
    selection treats such roads as dominated regardless of cost.
    """
    remaining = dist_map[road.dst]
    if not math.isfinite(remaining):
        return 1.0
    return (remaining + road.length) / (norms.max_dest_distance + norms.max_edge_length)


def phi_row(dist_row: np.ndarray, road_dst: np.ndarray, road_len: np.ndarray, max_edge_length: float) -> np.ndarray:
    """phi for every road toward one destination (1.0 where unreachable)."""
    finite = dist_row[np.isfinite(dist_row)]
    denom = finite.max() + max_edge_length
    out = (dist_row[road_dst] + road_len) / denom
    out[~np.isfinite(out)] = 1.0
    return out


# --------------------------------------------------------------------------
# selection kernel


@numba.njit(cache=True)
def _pick(buf, k, rng):
    if k == 1:
        return buf[0]
    return buf[rng.integers(0, k)]


@numba.njit(cache=True)
def select_road(
    kind,
    junction,
    arrival_road,
    only_nonfull,
    out_ptr,
    out_roads,
    road_dst,
    road_len,
    road_rev,
    road_cap,
    load,
    dist_row,
    phi_vals,
    alpha,
    eta_crit,
    sigma,
    rng,
    iwork,
    fwork,
):
    """Pick the exit road at ``junction`` for a vehicle heading to the
    destination described by ``dist_row``/``phi_vals``.

    Returns a road id, ``NO_ROAD`` when ``only_nonfull`` leaves no candidate,
    or ``DEST_UNREACHABLE`` for shortest-path routers with no route.
    ``iwork`` (int, shape ``(2, max_out_degree)``) and ``fwork`` (float,
    shape ``(max_out_degree,)``) are caller-owned work buffers.
    """
    lo = out_ptr[junction]
    hi = out_ptr[junction + 1]
    deg = hi - lo
    cand = iwork[0]
    n = 0
    banned = -1
    if kind == KIND_COVERAGE and arrival_road >= 0 and deg > 1:
        banned = road_rev[arrival_road]
    for i in range(lo, hi):
        r = out_roads[i]
        if r == banned:
            continue
        if only_nonfull and load[r] >= road_cap[r]:
            continue
        cand[n] = r
        n += 1
    if n == 0:
        return NO_ROAD

    buf = iwork[1]
    k = 0
    if kind == KIND_COVERAGE:
        any_reach = False
        for i in range(n):
            if math.isfinite(dist_row[road_dst[cand[i]]]):
                any_reach = True
                break
        costs = fwork
        best = np.inf
        for i in range(n):
            r = cand[i]
            costs[i] = np.inf
            if any_reach and not math.isfinite(dist_row[road_dst[r]]):
                continue
            eta = load[r] / road_cap[r]
            costs[i] = alpha * phi_vals[r] + (1.0 - alpha) * rho_kernel(eta, eta_crit, sigma)
            if costs[i] < best:
                best = costs[i]
        for i in range(n):
            if costs[i] <= best + COST_TIE_TOL:
                buf[k] = cand[i]
                k += 1
        return _pick(buf, k, rng)

    best = np.inf
    for i in range(n):
        r = cand[i]
        d = dist_row[road_dst[r]] + road_len[r]
        if d < best:
            best = d
    if not math.isfinite(best):
        return DEST_UNREACHABLE
    tol = DIST_TIE_RTOL * max(1.0, best)
    for i in range(n):
        r = cand[i]
        if dist_row[road_dst[r]] + road_len[r] <= best + tol:
            buf[k] = r
            k += 1
    if kind == KIND_SHORTEST or k == 1:
        return _pick(buf, k, rng)

    # modified shortest path: least occupied among the shortest exits
    best_eta = np.inf
    for i in range(k):
        eta = load[buf[i]] / road_cap[buf[i]]
        if eta < best_eta:
            best_eta = eta
    m = 0
    for i in range(k):
        if load[buf[i]] / road_cap[buf[i]] <= best_eta + COST_TIE_TOL:
            buf[m] = buf[i]
            m += 1
    return _pick(buf, m, rng)


# --------------------------------------------------------------------------
# array view of a network


@dataclass
class NetArrays:
    """Flat arrays describing a network's structure for the compiled kernels."""

    out_ptr: np.ndarray
    out_roads: np.ndarray
    road_src: np.ndarray
    road_dst: np.ndarray
    road_len: np.ndarray
    road_rev: np.ndarray
    road_cap: np.ndarray
    max_edge_length: float

    def work_buffers(self) -> tuple[np.ndarray, np.ndarray]:
        width = max(1, int(np.diff(self.out_ptr).max()))
        return np.empty((2, width), dtype=np.int64), np.empty(width)

    @classmethod
    def from_network(cls, net: Network) -> NetArrays:
        ptr = [0]
        flat = []
        for roads in net.adjacency:
            flat.extend(roads)
            ptr.append(len(flat))
        return cls(
            out_ptr=np.array(ptr, dtype=np.int64),
            out_roads=np.array(flat, dtype=np.int64),
            road_src=np.array([r.src for r in net.roads], dtype=np.int64),
            road_dst=np.array([r.dst for r in net.roads], dtype=np.int64),
            road_len=np.array([r.length for r in net.roads], dtype=float),
            road_rev=np.array([net.reverse_of(r.id) for r in net.roads], dtype=np.int64),
            road_cap=np.array([r.capacity for r in net.roads], dtype=np.int64),
            max_edge_length=max(r.length for r in net.roads),
        )


def net_arrays(net: Network) -> NetArrays:
    cached = getattr(net, "_arrays", None)
    if cached is None:
        cached = NetArrays.from_network(net)
        net._arrays = cached
    return cached


def _arrival_road(vehicle) -> int:
    road = getattr(vehicle, "current_road", None)
    return NO_ROAD if road is None else int(road)


def _select(kind, vehicle, junction, net, dist_map, alpha, eta_crit, sigma, rng, norms=None):
    arr = net_arrays(net)
    dist_row = np.asarray(dist_map, dtype=float)
    if kind == KIND_COVERAGE and norms is not None:
        phis = (dist_row[arr.road_dst] + arr.road_len) / (norms.max_dest_distance + norms.max_edge_length)
        phis[~np.isfinite(phis)] = 1.0
    elif kind == KIND_COVERAGE:
        phis = phi_row(dist_row, arr.road_dst, arr.road_len, arr.max_edge_length)
    else:
        phis = np.zeros(len(net.roads))
    load = np.array([r.load for r in net.roads], dtype=np.int64)
    return select_road(
        kind, junction, _arrival_road(vehicle), False,
        arr.out_ptr, arr.out_roads, arr.road_dst, arr.road_len, arr.road_rev, arr.road_cap,
        load, dist_row, phis, float(alpha), float(eta_crit), float(sigma), rng, *arr.work_buffers(),
    )


def candidate_roads(net: Network, junction: int, arrival_road: int | None = None) -> list[int]:
    """Exit roads a coverage-routed vehicle may take: every road leaving the
    junction except the immediate U-turn, which is allowed only at dead ends."""
    exits = list(net.adjacency[junction])
    if arrival_road is not None and arrival_road >= 0 and len(exits) > 1:
        rev = net.reverse_of(arrival_road)
        exits = [r for r in exits if r != rev]
    return exits


def cost_breakdown(vehicle, junction: int, net: Network, dist_map, norms: NormConstants, params: CoverageParams) -> list[CostBreakdown]:
    out = []
    for r in candidate_roads(net, junction, _arrival_road(vehicle)):
        road = net.roads[r]
        p = phi(dist_map, road, norms)
        q = rho(road.occupancy, params)
        out.append(CostBreakdown(r, p, q, cost_kernel(p, q, params.alpha)))
    return out


def choose_next_road(vehicle, junction: int, net: Network, dist_map, norms: NormConstants, params: CoverageParams, rng: np.random.Generator) -> int:
    """Exit road minimising the coverage cost, ties broken uniformly via ``rng``.

    ``vehicle`` needs ``current_road`` (the arrival road, or ``None`` for a
    vehicle entering the network); ``dist_map`` holds distances to its
    destination.
    """
    if not net.adjacency[junction]:
        raise ValueError(f"junction {junction} has no exit roads")
    return int(_select(KIND_COVERAGE, vehicle, junction, net, dist_map, params.alpha, params.eta_crit, params.sigma, rng, norms))


def shortest_path_next(vehicle, junction: int, net: Network, dist_map, rng: np.random.Generator) -> int:
    road = _select(KIND_SHORTEST, vehicle, junction, net, dist_map, 1.0, ETA_CRIT, SIGMA, rng)
    if road == DEST_UNREACHABLE:
        raise ValueError(f"destination unreachable from junction {junction}")
    return int(road)


def modified_shortest_next(vehicle, junction: int, net: Network, dist_map, rng: np.random.Generator) -> int:
    road = _select(KIND_MODIFIED, vehicle, junction, net, dist_map, 1.0, ETA_CRIT, SIGMA, rng)
    if road == DEST_UNREACHABLE:
        raise ValueError(f"destination unreachable from junction {junction}")
    return int(road)
