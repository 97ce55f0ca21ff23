import math
import random
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from covroute.netgraph import build_grid, from_edges, shortest_distance_map
from covroute.routing import (
    CoverageParams,
    candidate_roads,
    choose_next_road,
    cost,
    cost_breakdown,
    modified_shortest_next,
    norm_constants,
    phi,
    rho,
    shortest_path_next,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def path3():
    # A(0) - B(1) - C(2), 100 m apart
    return from_edges([(0, 0), (100, 0), (200, 0)], [(0, 1), (1, 2)])


def at(junction_road=None, dest=0):
    return SimpleNamespace(current_road=junction_road, dest=dest)


def test_phi_path_fixture():
    net = path3()
    dist = shortest_distance_map(net, 2)
    norms = norm_constants(net, dist)
    ab = net.road_between(0, 1)
    bc = net.road_between(1, 2)
    assert phi(dist, net.roads[ab], norms) == pytest.approx(2 / 3, abs=1e-12)
    assert phi(dist, net.roads[bc], norms) == pytest.approx(1 / 3, abs=1e-12)


def test_phi_unreachable_is_one():
    net = from_edges([(0, 0), (1, 0), (5, 0), (6, 0)], [(0, 1), (2, 3)])
    dist = shortest_distance_map(net, 0)
    norms = norm_constants(net, dist)
    assert phi(dist, net.roads[net.road_between(2, 3)], norms) == 1.0


@pytest.mark.parametrize(
    "eta, expected",
    [(0.0, 0.0), (0.1, 0.1), (0.5, 1 - math.exp(-5)), (0.2, 1 - math.exp(-2))],
)
def test_rho_values(eta, expected):
    assert rho(eta) == pytest.approx(expected, abs=1e-12)


def test_rho_jumps_at_critical_occupancy():
    below = rho(0.2 - 1e-12)
    assert below == pytest.approx(0.2, abs=1e-9)
    assert rho(0.2) - below > 0.6


@pytest.mark.parametrize("eta", [-0.01, 1.01])
def test_rho_rejects_out_of_range(eta):
    with pytest.raises(ValueError):
        rho(eta)


def test_params_validation():
    for bad in (dict(alpha=1.5), dict(eta_crit=0.0), dict(eta_crit=1.0), dict(sigma=0.0)):
        with pytest.raises(ValueError):
            CoverageParams(**bad)


def test_cost_values():
    assert cost(0.5, 0.25, 0.4) == pytest.approx(0.35, abs=1e-12)
    assert cost(0.3, 0.9, 1.0) == 0.3
    assert cost(0.3, 0.9, 0.0) == 0.9


@given(unit, unit, unit)
def test_cost_is_convex_combination(p, q, a):
    j = cost(p, q, a)
    assert min(p, q) - 1e-15 <= j <= max(p, q) + 1e-15


@given(unit, unit, unit, unit)
def test_cost_monotone(p, q, a, bump):
    assume(p + bump <= 1 and q + bump <= 1)
    assert cost(p + bump, q, a) >= cost(p, q, a) - 1e-15
    assert cost(p, q + bump, a) >= cost(p, q, a) - 1e-15


@given(unit)
def test_rho_bounded_and_penalised_above_critical(eta):
    r = rho(eta)
    assert 0.0 <= r <= 1.0
    if eta >= 0.2:
        assert r >= rho(0.2) > 0.2
    # 1 - exp(-10 eta) >= eta holds up to eta ~ 0.999954, not all the way to 1
    if 0.2 <= eta <= 0.99995:
        assert r >= eta


def test_rho_dips_below_identity_next_to_full():
    assert rho(1.0) < 1.0


@given(unit, unit)
def test_rho_monotone_per_branch(a, b):
    lo, hi = sorted((a, b))
    if (lo < 0.2) == (hi < 0.2):
        assert rho(lo) <= rho(hi)


def perturbed_grid(n, seed):
    """Grid whose lengths are jittered so shortest paths are unique."""
    rng = random.Random(seed)
    base = build_grid(n, n, 100)
    edges = base.undirected_edges()
    coords = [(j.x, j.y) for j in base.junctions]
    return from_edges(coords, edges, [100 + rng.uniform(-20, 20) for _ in edges])


def walk(net, origin, dest, chooser):
    """Follow a per-junction router from origin to dest, returning roads taken."""
    roads, j, arrival = [], origin, None
    for _ in range(4 * net.n_junctions):
        if j == dest:
            return roads
        r = chooser(SimpleNamespace(current_road=arrival, dest=dest), j)
        roads.append(r)
        arrival, j = r, net.roads[r].dst
    raise AssertionError("route did not terminate")


def dijkstra_path(net, origin, dest):
    dist = shortest_distance_map(net, dest)
    path, j = [], origin
    while j != dest:
        best = min(net.adjacency[j], key=lambda r: dist[net.roads[r].dst] + net.roads[r].length)
        path.append(best)
        j = net.roads[best].dst
    return path


def test_occupancy_blind_coverage_with_unit_alpha_follows_dijkstra():
    rng = np.random.default_rng(0)
    py = random.Random(1)
    params = CoverageParams(alpha=1.0)
    for trial in range(30):
        net = perturbed_grid(5, trial)
        o, d = py.sample(range(net.n_junctions), 2)
        dist = shortest_distance_map(net, d)
        norms = norm_constants(net, dist)
        route = walk(net, o, d, lambda v, j: choose_next_road(v, j, net, dist, norms, params, rng))
        assert route == dijkstra_path(net, o, d)


def test_lower_phi_wins_with_equal_rho():
    net = build_grid(3, 3, 100)
    dest = 8
    dist = shortest_distance_map(net, dest)
    norms = norm_constants(net, dist)
    rng = np.random.default_rng(0)
    # at junction 4 (centre) heading to corner 8: exits to 5 and 7 are shorter than 1 and 3
    for alpha in (0.1, 0.5, 1.0):
        for _ in range(20):
            r = choose_next_road(at(None, dest), 4, net, dist, norms, CoverageParams(alpha), rng)
            assert net.roads[r].dst in (5, 7)


def test_lower_rho_wins_with_equal_phi():
    net = build_grid(3, 3, 100)
    dest = 8
    dist = shortest_distance_map(net, dest)
    norms = norm_constants(net, dist)
    rng = np.random.default_rng(0)
    to5 = net.road_between(4, 5)
    to7 = net.road_between(4, 7)
    net.roads[to5].load = 4
    net.roads[to7].load = 1
    for alpha in (0.3, 0.5, 0.99):
        r = choose_next_road(at(None, dest), 4, net, dist, norms, CoverageParams(alpha), rng)
        assert r == to7


def test_congestion_can_trigger_a_detour():
    net = build_grid(3, 3, 100)
    dest = 2
    dist = shortest_distance_map(net, dest)
    norms = norm_constants(net, dist)
    direct = net.road_between(1, 2)
    net.roads[direct].load = net.roads[direct].capacity
    rng = np.random.default_rng(0)
    assert choose_next_road(at(None, dest), 1, net, dist, norms, CoverageParams(0.3), rng) != direct
    assert choose_next_road(at(None, dest), 1, net, dist, norms, CoverageParams(1.0), rng) == direct


def test_tie_break_is_seeded_and_fair():
    net = build_grid(3, 3, 100)
    dest = 8
    dist = shortest_distance_map(net, dest)
    norms = norm_constants(net, dist)
    params = CoverageParams(0.7)
    picks = [choose_next_road(at(None, dest), 4, net, dist, norms, params, np.random.default_rng(s)) for s in range(5)]
    again = [choose_next_road(at(None, dest), 4, net, dist, norms, params, np.random.default_rng(s)) for s in range(5)]
    assert picks == again
    rng = np.random.default_rng(123)
    n = 10_000
    hits = sum(choose_next_road(at(None, dest), 4, net, dist, norms, params, rng) == net.road_between(4, 5) for _ in range(n))
    se = math.sqrt(0.25 / n)
    assert abs(hits / n - 0.5) <= 3 * se


def test_u_turn_excluded_unless_dead_end():
    net = build_grid(3, 3, 100)
    arrival = net.road_between(3, 4)
    assert net.road_between(4, 3) not in candidate_roads(net, 4, arrival)
    dead = from_edges([(0, 0), (100, 0), (200, 0)], [(0, 1), (1, 2)])
    into_end = dead.road_between(1, 2)
    assert candidate_roads(dead, 2, into_end) == [dead.road_between(2, 1)]


def test_coverage_never_u_turns_even_when_cheaper():
    net = build_grid(3, 3, 100)
    dest = 3
    dist = shortest_distance_map(net, dest)
    norms = norm_constants(net, dist)
    arrival = net.road_between(3, 4)
    r = choose_next_road(at(arrival, dest), 4, net, dist, norms, CoverageParams(1.0), np.random.default_rng(0))
    assert r != net.road_between(4, 3)


def test_unreachable_candidates_lose():
    # junction 1 links to a reachable line and, one-way, to an isolated pocket
    from covroute.netgraph import Junction, Network, Road

    junctions = [Junction(i, float(i), 0.0) for i in range(4)]
    roads = [
        Road(0, 0, 1, 1.0, 1), Road(1, 1, 0, 1.0, 1),
        Road(2, 1, 2, 1.0, 1), Road(3, 2, 1, 1.0, 1),
        Road(4, 1, 3, 1.0, 1),  # 3 is a sink: nothing leaves it
    ]
    net = Network(junctions, roads)
    dist = shortest_distance_map(net, 0)
    assert math.isinf(dist[3])
    norms = norm_constants(net, dist)
    net.roads[1].load = 1  # road back to the destination is full
    # arriving from 2 bans the U-turn, leaving the full road and the dead end
    for alpha in (0.0, 0.5):
        r = choose_next_road(at(3, 0), 1, net, dist, norms, CoverageParams(alpha), np.random.default_rng(0))
        assert r == 1


def test_shortest_path_unique_matches_dijkstra():
    net = perturbed_grid(4, 7)
    dist = shortest_distance_map(net, 15)
    rng = np.random.default_rng(0)
    for j in range(15):
        r = shortest_path_next(at(None, 15), j, net, dist, rng)
        assert r == dijkstra_path(net, j, 15)[0]
        assert modified_shortest_next(at(None, 15), j, net, dist, rng) == r


def test_shortest_path_ties_fair_on_2x2():
    net = build_grid(2, 2, 100)
    dist = shortest_distance_map(net, 3)
    rng = np.random.default_rng(2024)
    n = 10_000
    first = net.road_between(0, 1)
    hits = sum(shortest_path_next(at(None, 3), 0, net, dist, rng) == first for _ in range(n))
    assert abs(hits / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_shortest_path_route_length_equals_distance():
    net = build_grid(5, 5, 100)
    rng = np.random.default_rng(5)
    for o, d in [(0, 24), (3, 21), (12, 0), (7, 19)]:
        dist = shortest_distance_map(net, d)
        route = walk(net, o, d, lambda v, j: shortest_path_next(v, j, net, dist, rng))
        assert sum(net.roads[r].length for r in route) == pytest.approx(dist[o])


def test_modified_prefers_emptier_shortest_exit():
    net = build_grid(2, 2, 100)
    dist = shortest_distance_map(net, 3)
    a, b = net.road_between(0, 1), net.road_between(0, 2)
    cap = net.roads[a].capacity
    net.roads[a].load = round(0.3 * cap)
    net.roads[b].load = round(0.1 * cap)
    assert modified_shortest_next(at(None, 3), 0, net, dist, np.random.default_rng(0)) == b


def test_modified_matches_shortest_on_empty_network():
    net = build_grid(4, 4, 100)
    dist = shortest_distance_map(net, 15)
    for seed in range(20):
        a = shortest_path_next(at(None, 15), 0, net, dist, np.random.default_rng(seed))
        b = modified_shortest_next(at(None, 15), 0, net, dist, np.random.default_rng(seed))
        assert a == b


def test_shortest_path_unreachable_raises():
    from covroute.netgraph import Junction, Network, Road

    net = Network([Junction(i, float(i), 0.0) for i in range(3)], [Road(0, 0, 1, 1.0, 1), Road(1, 1, 0, 1.0, 1), Road(2, 2, 0, 1.0, 1)])
    dist = shortest_distance_map(net, 2)
    with pytest.raises(ValueError):
        shortest_path_next(at(None, 2), 0, net, dist, np.random.default_rng(0))
    with pytest.raises(ValueError):
        modified_shortest_next(at(None, 2), 0, net, dist, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_breakdown_bounded_and_choice_is_a_minimiser(seed, alpha):
    py = random.Random(seed)
    net = perturbed_grid(4, seed)
    for r in net.roads:
        r.load = py.randint(0, r.capacity)
    d = py.randrange(16)
    j = py.choice([x for x in range(16) if x != d])
    dist = shortest_distance_map(net, d)
    norms = norm_constants(net, dist)
    params = CoverageParams(alpha)
    rows = cost_breakdown(at(None, d), j, net, dist, norms, params)
    for row in rows:
        assert 0 <= row.phi <= 1 and 0 <= row.rho <= 1 and 0 <= row.j_cost <= 1
        assert row.j_cost == pytest.approx(alpha * row.phi + (1 - alpha) * row.rho, abs=1e-15)
    chosen = choose_next_road(at(None, d), j, net, dist, norms, params, np.random.default_rng(seed))
    best = min(row.j_cost for row in rows)
    assert next(row for row in rows if row.road == chosen).j_cost <= best + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 1.0))
def test_equal_rho_choice_minimises_phi(seed, alpha):
    py = random.Random(seed)
    net = build_grid(4, 4, 100)
    load = py.randint(0, 13)
    for r in net.roads:
        r.load = load
    d = py.randrange(16)
    j = py.choice([x for x in range(16) if x != d])
    dist = shortest_distance_map(net, d)
    norms = norm_constants(net, dist)
    rows = cost_breakdown(at(None, d), j, net, dist, norms, CoverageParams(alpha))
    chosen = choose_next_road(at(None, d), j, net, dist, norms, CoverageParams(alpha), np.random.default_rng(0))
    assert next(row for row in rows if row.road == chosen).phi == pytest.approx(min(row.phi for row in rows))
