"""Road-network graph model, topology generators and shortest-path distances.

Undirected streets are stored as pairs of directed roads so that load and
occupancy are tracked per travel direction.  Roads created by the generators
come in pairs ``(2e, 2e + 1)``, but loaded networks may order roads freely;
use :meth:`Network.reverse_of` rather than relying on id parity.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

UNREACHABLE = math.inf

EFFECTIVE_VEHICLE_LENGTH = 7.5  # m, jam spacing per vehicle
DEFAULT_SPEED_LIMIT = 13.9  # m/s, ~50 km/h
GRID_EDGE_LENGTH = 100.0  # m


@dataclass
class Junction:
    id: int
    x: float
    y: float


@dataclass
class Road:
    id: int
    src: int
    dst: int
    length: float
    capacity: int
    speed_limit: float = DEFAULT_SPEED_LIMIT
    load: int = 0

    @property
    def occupancy(self) -> float:
        return self.load / self.capacity


@dataclass
class NetworkStats:
    node_count: int
    edge_count: int
    mean_degree: float
    diameter: float


class NetworkError(ValueError):
    pass


@dataclass
class Network:
    """Directed-pair road graph.

    ``adjacency[j]`` lists the ids of roads leaving junction ``j`` in
    ascending id order.
    """

    junctions: list[Junction]
    roads: list[Road]
    adjacency: list[list[int]] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        n = len(self.junctions)
        for i, junc in enumerate(self.junctions):
            if junc.id != i:
                raise NetworkError(f"junction ids must be contiguous from 0, got {junc.id} at {i}")
            if not (math.isfinite(junc.x) and math.isfinite(junc.y)):
                raise NetworkError(f"junction {i} has non-finite coordinates")
        for i, road in enumerate(self.roads):
            if road.id != i:
                raise NetworkError(f"road ids must be contiguous from 0, got {road.id} at {i}")
            if not (0 <= road.src < n and 0 <= road.dst < n):
                raise NetworkError(f"road {i} references an unknown junction")
            if road.src == road.dst:
                raise NetworkError(f"road {i} is a self-loop")
            if not road.length > 0:
                raise NetworkError(f"road {i} has non-positive length")
            if road.capacity < 1:
                raise NetworkError(f"road {i} has capacity < 1")
        self.adjacency = [[] for _ in range(n)]
        self._by_pair: dict[tuple[int, int], int] = {}
        for road in self.roads:
            self.adjacency[road.src].append(road.id)
            if (road.src, road.dst) in self._by_pair:
                raise NetworkError(f"duplicate road {road.src}->{road.dst}")
            self._by_pair[(road.src, road.dst)] = road.id

    @property
    def n_junctions(self) -> int:
        return len(self.junctions)

    def road_between(self, src: int, dst: int) -> int | None:
        return self._by_pair.get((src, dst))

    def reverse_of(self, road_id: int) -> int:
        """Id of the opposite-direction road, or -1 if the road is one-way."""
        road = self.roads[road_id]
        rev = self._by_pair.get((road.dst, road.src))
        return -1 if rev is None else rev

    def undirected_edges(self) -> list[tuple[int, int]]:
        return sorted({(min(r.src, r.dst), max(r.src, r.dst)) for r in self.roads})

    def is_connected(self) -> bool:
        return _connected(self.n_junctions, self.undirected_edges())

    def is_symmetric(self) -> bool:
        for road in self.roads:
            rev = self.reverse_of(road.id)
            if rev < 0:
                return False
            other = self.roads[rev]
            if other.length != road.length or other.capacity != road.capacity:
                return False
        return True

    def clear_loads(self) -> None:
        for road in self.roads:
            road.load = 0

    def copy(self) -> Network:
        return network_from_dict(network_to_dict(self))


def derive_capacity(length: float, effective_vehicle_length: float = EFFECTIVE_VEHICLE_LENGTH) -> int:
    """Number of vehicles that fit on a road at jam spacing (at least 1)."""
    if not length > 0 or not effective_vehicle_length > 0:
        raise ValueError("length and effective_vehicle_length must be positive")
    # tolerate float noise such as 750 / 7.5 = 99.99999...
    return max(1, math.floor(length / effective_vehicle_length + 1e-9))


def from_edges(
    coords: list[tuple[float, float]],
    edges: list[tuple[int, int]],
    lengths: list[float] | None = None,
    speed_limit: float = DEFAULT_SPEED_LIMIT,
    name: str = "",
) -> Network:
    """Build an undirected network from junction coordinates and an edge list.

    Edge lengths default to the Euclidean distance between endpoints.
    """
    junctions = [Junction(i, float(x), float(y)) for i, (x, y) in enumerate(coords)]
    roads = []
    for e, (u, v) in enumerate(edges):
        if lengths is None:
            (x0, y0), (x1, y1) = coords[u], coords[v]
            length = math.hypot(x1 - x0, y1 - y0)
        else:
            length = float(lengths[e])
        cap = derive_capacity(length)
        roads.append(Road(2 * e, u, v, length, cap, speed_limit))
        roads.append(Road(2 * e + 1, v, u, length, cap, speed_limit))
    return Network(junctions, roads, name=name)


def _connected(n: int, edges) -> bool:
    if n == 0:
        return False
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


# --------------------------------------------------------------------------
# generators


def build_grid(rows: int, cols: int, edge_len: float = GRID_EDGE_LENGTH) -> Network:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise NetworkError(f"degenerate grid {rows}x{cols}")
    if not edge_len > 0:
        raise NetworkError("edge_len must be positive")
    coords = [(c * edge_len, r * edge_len) for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    # lattice spacing is exact; avoid hypot rounding
    return from_edges(coords, edges, [edge_len] * len(edges), name=f"grid{rows}x{cols}")


def build_spiderweb(rings: int, spokes: int, ring_spacing: float = GRID_EDGE_LENGTH) -> Network:
    """Concentric ring roads joined by radial spokes.

    Ring ``i`` (1-based) has radius ``i * ring_spacing``; junction
    ``(i - 1) * spokes + k`` sits at angle ``2 pi k / spokes`` on it.
    """
    if rings < 1:
        raise NetworkError("rings must be >= 1")
    if spokes < 3:
        raise NetworkError("spokes must be >= 3 so each ring is a simple cycle")
    if not ring_spacing > 0:
        raise NetworkError("ring_spacing must be positive")
    coords = []
    for i in range(1, rings + 1):
        radius = i * ring_spacing
        for k in range(spokes):
            theta = 2 * math.pi * k / spokes
            coords.append((radius * math.cos(theta), radius * math.sin(theta)))
    edges = []
    for i in range(rings):
        base = i * spokes
        for k in range(spokes):
            edges.append((base + k, base + (k + 1) % spokes))
        if i + 1 < rings:
            for k in range(spokes):
                edges.append((base + k, base + spokes + k))
    return from_edges(coords, edges, name=f"spiderweb{rings}x{spokes}")


def build_random_rewire(base: Network, rewires: int, seed: int, max_attempts: int | None = None) -> Network:
    """Rewire ``rewires`` edges of ``base`` while keeping it connected.

    Each rewire picks a random edge, keeps one random endpoint and reattaches
    the other end to a random node that is not already a neighbour.  Moves
    that would disconnect the graph are rolled back and retried.
    """
    if rewires < 0:
        raise NetworkError("rewires must be >= 0")
    if not base.is_connected():
        raise NetworkError("base network must be connected")
    if rewires == 0:
        return base.copy()
    rng = random.Random(seed)
    n = base.n_junctions
    coords = [(j.x, j.y) for j in base.junctions]
    lengths = {}
    for road in base.roads:
        lengths[(min(road.src, road.dst), max(road.src, road.dst))] = road.length
    edges = list(base.undirected_edges())
    edge_set = set(edges)
    budget = max_attempts if max_attempts is not None else 100 * rewires + 100
    done = attempts = 0
    while done < rewires:
        if attempts >= budget:
            raise NetworkError(f"no valid rewire found after {attempts} attempts ({done}/{rewires} done)")
        attempts += 1
        idx = rng.randrange(len(edges))
        u, v = edges[idx]
        keep, _ = (u, v) if rng.random() < 0.5 else (v, u)
        w = rng.randrange(n)
        new = (min(keep, w), max(keep, w))
        if w == keep or new in edge_set:
            continue
        trial = edges[:idx] + edges[idx + 1:] + [new]
        if not _connected(n, trial):
            continue
        edge_set.discard(edges[idx])
        edge_set.add(new)
        edges = trial
        (x0, y0), (x1, y1) = coords[new[0]], coords[new[1]]
        lengths[new] = math.hypot(x1 - x0, y1 - y0)
        done += 1
    edges.sort()
    return from_edges(coords, edges, [lengths[e] for e in edges], name=f"rewired{rewires}")


def _preferential_pick(rng: random.Random, degree: list[int], exclude=()) -> int:
    weights = [0 if i in exclude else d for i, d in enumerate(degree)]
    return rng.choices(range(len(degree)), weights=weights)[0]


def build_scale_free(
    nodes: int, target_edges: int, seed: int, mean_edge_length: float = GRID_EDGE_LENGTH
) -> Network:
    """Connected preferential-attachment graph with exactly ``target_edges`` edges.

    A preferential-attachment tree forms the backbone; the remaining edges
    join degree-weighted random node pairs.  Junctions are placed with a
    Kamada-Kawai spring layout, scaled so the mean road length equals
    ``mean_edge_length``.
    """
    if nodes < 2:
        raise NetworkError("nodes must be >= 2")
    if target_edges < nodes - 1:
        raise NetworkError("target_edges < nodes - 1 cannot be connected")
    max_edges = nodes * (nodes - 1) // 2
    if target_edges > max_edges:
        raise NetworkError(f"target_edges > {max_edges} requires multi-edges")
    rng = random.Random(seed)
    degree = [0] * nodes
    edges = set()

    def add(u, v):
        edges.add((min(u, v), max(u, v)))
        degree[u] += 1
        degree[v] += 1

    add(0, 1)
    for i in range(2, nodes):
        add(i, _preferential_pick(rng, degree[:i]))
    while len(edges) < target_edges:
        u = _preferential_pick(rng, degree)
        v = _preferential_pick(rng, degree, exclude=(u,))
        if (min(u, v), max(u, v)) not in edges:
            add(u, v)

    edge_list = sorted(edges)
    graph = nx.Graph()
    graph.add_nodes_from(range(nodes))
    graph.add_edges_from(edge_list)
    if nodes == 2:
        pos = {0: np.array([0.0, 0.0]), 1: np.array([1.0, 0.0])}
    else:
        pos = nx.kamada_kawai_layout(graph)
    raw = [float(np.hypot(*(pos[u] - pos[v]))) for u, v in edge_list]
    scale = mean_edge_length / (sum(raw) / len(raw))
    coords = [(float(pos[i][0]) * scale, float(pos[i][1]) * scale) for i in range(nodes)]
    return from_edges(coords, edge_list, name=f"scalefree{nodes}")


PRESET_SEEDS = {"random": 7, "scalefree": 11}


def preset(name: str) -> Network:
    """Named topologies used throughout the experiments."""
    if name == "grid5":
        net = build_grid(5, 5, GRID_EDGE_LENGTH)
    elif name == "grid10":
        net = build_grid(10, 10, GRID_EDGE_LENGTH)
    elif name == "random":
        net = build_random_rewire(build_grid(10, 10, GRID_EDGE_LENGTH), 50, PRESET_SEEDS["random"])
    elif name == "spiderweb":
        net = build_spiderweb(5, 10, GRID_EDGE_LENGTH)
    elif name == "scalefree":
        net = build_scale_free(48, 58, PRESET_SEEDS["scalefree"])
    else:
        raise NetworkError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    net.name = name
    return net


PRESETS = ("grid5", "grid10", "random", "spiderweb", "scalefree")


# --------------------------------------------------------------------------
# distances and statistics


def shortest_distance_map(net: Network, dest: int) -> list[float]:
    """Shortest road distance from every junction *to* ``dest``.

    Runs Dijkstra over reversed roads so it is also correct for one-way
    networks.  Unreachable junctions map to :data:`UNREACHABLE`.
    """
    if not 0 <= dest < net.n_junctions:
        raise NetworkError(f"invalid destination {dest}")
    incoming = [[] for _ in range(net.n_junctions)]
    for road in net.roads:
        incoming[road.dst].append((road.src, road.length))
    dist = [UNREACHABLE] * net.n_junctions
    dist[dest] = 0.0
    heap = [(0.0, dest)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for w, length in incoming[u]:
            nd = d + length
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def all_pairs_distances(net: Network) -> np.ndarray:
    """``D[d, v]`` = shortest distance from ``v`` to destination ``d``."""
    return np.array([shortest_distance_map(net, d) for d in range(net.n_junctions)], dtype=float)


def network_stats(net: Network) -> NetworkStats:
    n = net.n_junctions
    m = len(net.undirected_edges())
    if not net.is_connected():
        raise NetworkError("diameter is undefined on a disconnected network")
    diameter = float(all_pairs_distances(net).max())
    return NetworkStats(node_count=n, edge_count=m, mean_degree=2 * m / n, diameter=diameter)


# --------------------------------------------------------------------------
# file format


def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "junctions": [{"id": j.id, "x": j.x, "y": j.y} for j in net.junctions],
        "roads": [
            {
                "id": r.id,
                "from": r.src,
                "to": r.dst,
                "length": r.length,
                "capacity": r.capacity,
                "speed_limit": r.speed_limit,
            }
            for r in net.roads
        ],
    }


def network_from_dict(data: dict) -> Network:
    try:
        junctions = [Junction(int(j["id"]), float(j["x"]), float(j["y"])) for j in data["junctions"]]
        roads = [
            Road(
                int(r["id"]),
                int(r["from"]),
                int(r["to"]),
                float(r["length"]),
                int(r["capacity"]),
                float(r.get("speed_limit", DEFAULT_SPEED_LIMIT)),
            )
            for r in data["roads"]
        ]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed network document: {exc}") from exc
    return Network(junctions, roads, name=data.get("name", ""))


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def load_network(path) -> Network:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: not a JSON network document ({exc})") from exc
    return network_from_dict(data)
