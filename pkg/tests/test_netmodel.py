"""Network model: schema, validation, connections, routing."""

import json
import math
import random

import pytest

from trafcal import fixtures
from trafcal.netmodel import (
    BuildingPoly,
    BusStop,
    DanglingReferenceError,
    Edge,
    Junction,
    NetworkFormatError,
    NoPathError,
    ParkingArea,
    RoadNetwork,
    TlsPhase,
    TlsProgram,
    free_flow_time,
    load_network,
    network_from_dict,
    network_to_dict,
    route_cost,
    save_network,
    shortest_path,
    shortest_paths_from,
    validate_network,
)


def tiny_net(**kwargs):
    junctions = [
        Junction("a", 0.0, 0.0, kind="dead_end"),
        Junction("b", 100.0, 0.0),
        Junction("c", 200.0, 0.0, kind="dead_end"),
    ]
    edges = [
        Edge("ab", "a", "b", 100.0),
        Edge("bc", "b", "c", 100.0),
        Edge("cb", "c", "b", 100.0),
        Edge("ba", "b", "a", 100.0),
    ]
    return RoadNetwork(junctions, edges, **kwargs)


# -- construction and references --------------------------------------------


def test_dangling_edge_reference_rejected():
    with pytest.raises(DanglingReferenceError):
        RoadNetwork([Junction("a", 0, 0)], [Edge("e", "a", "missing", 10.0)])


def test_duplicate_ids_rejected():
    with pytest.raises(NetworkFormatError):
        RoadNetwork(
            [Junction("a", 0, 0), Junction("a", 1, 1)],
            [],
        )


def test_adjacency_is_sorted_and_complete():
    net = tiny_net()
    assert net.out_edges["b"] == ("ba", "bc")
    assert net.in_edges["b"] == ("ab", "cb")
    assert net.successors["ab"] == ("bc",)  # U-turn ab->ba dropped
    assert net.successors["cb"] == ("ba",)


def test_uturn_kept_when_it_is_the_only_movement():
    junctions = [Junction("a", 0, 0, kind="dead_end"), Junction("b", 10, 0)]
    edges = [Edge("ab", "a", "b", 10.0), Edge("ba", "b", "a", 10.0)]
    net = RoadNetwork(junctions, edges)
    assert net.successors["ab"] == ("ba",)


def test_connections_are_ordered_pairs():
    net = fixtures.grid_network()
    conns = net.connections("n22")
    assert len(conns) == 12
    assert conns == tuple(sorted(conns))
    # 4 in-edges, each with 3 non-U-turn outgoing movements
    ins = {c[0] for c in conns}
    assert len(ins) == 4
    for ein, eout in conns:
        assert net.edges[ein].to_junction == "n22"
        assert net.edges[eout].from_junction == "n22"


# -- serialization -----------------------------------------------------------


def test_round_trip_preserves_everything(tmp_path):
    stops = (BusStop("s1", "ab", 50.0, "mid"),)
    parks = (ParkingArea("p1", "bc", 10, 2),)
    polys = (BuildingPoly("poly1", ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0))),)
    progs = ()
    net = tiny_net(bus_stops=stops, parking_areas=parks, buildings=polys, tls_programs=progs)
    path = tmp_path / "net.json"
    save_network(net, path)
    again = load_network(path)
    assert network_to_dict(again) == network_to_dict(net)


def test_grid_round_trip_including_tls(tmp_path):
    net = fixtures.grid_network()
    path = tmp_path / "grid.json"
    save_network(net, path)
    again = load_network(path)
    assert network_to_dict(again) == network_to_dict(net)
    assert len(again.tls_programs) == 9


def test_unknown_field_rejected():
    doc = network_to_dict(tiny_net())
    doc["edges"][0]["color"] = "red"
    with pytest.raises(NetworkFormatError) as err:
        network_from_dict(doc)
    assert "color" in str(err.value)


def test_missing_field_rejected():
    doc = network_to_dict(tiny_net())
    del doc["edges"][0]["length"]
    with pytest.raises(NetworkFormatError):
        network_from_dict(doc)


def test_bool_is_not_a_number():
    doc = network_to_dict(tiny_net())
    doc["edges"][0]["length"] = True
    with pytest.raises(NetworkFormatError):
        network_from_dict(doc)


def test_save_is_deterministic(tmp_path):
    net = fixtures.grid_network()
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_network(net, p1)
    save_network(net, p2)
    assert p1.read_bytes() == p2.read_bytes()


# -- validation --------------------------------------------------------------


def test_grid_fixture_is_clean():
    assert validate_network(fixtures.grid_network()) == []


def test_structural_violations_are_reported():
    junctions = [
        Junction("a", 0.0, math.nan),
        Junction("b", 100.0, 0.0, kind="traffic_light"),
        Junction("c", 200.0, 0.0),
    ]
    edges = [
        Edge("ab", "a", "b", -5.0),
        Edge("bc", "b", "c", 100.0, lane_count=0),
        Edge("cb", "c", "b", 100.0, speed_limit=0.0),
        Edge("ba", "b", "a", 100.0),
    ]
    net = RoadNetwork(junctions, edges)
    codes = [v.code for v in validate_network(net)]
    for expected in (
        "NONFINITE_COORD", "NONPOSITIVE_LENGTH", "BAD_LANE_COUNT",
        "NONPOSITIVE_SPEED", "MISSING_TLS",
    ):
        assert expected in codes
    assert codes == sorted(codes)


def test_tls_violations():
    junctions = [
        Junction("a", 0, 0, kind="dead_end"),
        Junction("b", 10, 0, kind="traffic_light"),
        Junction("c", 20, 0, kind="dead_end"),
    ]
    edges = [
        Edge("ab", "a", "b", 10.0), Edge("bc", "b", "c", 10.0),
        Edge("cb", "c", "b", 10.0), Edge("ba", "b", "a", 10.0),
    ]
    # arity 5 is wrong (2 connections), 'x' is not a state char,
    # and min > duration breaks the duration bounds
    prog = TlsProgram("b", "static", (TlsPhase(10.0, 20.0, 30.0, "Gxzzz"),))
    net = RoadNetwork(junctions, edges, [prog])
    codes = {v.code for v in validate_network(net)}
    assert {"PHASE_ARITY", "PHASE_STATE_CHARS", "PHASE_DURATION_BOUNDS"} <= codes

    empty = RoadNetwork(junctions, edges, [TlsProgram("b", "static", ())])
    assert "EMPTY_PROGRAM" in {v.code for v in validate_network(empty)}


def test_orphan_tls_flagged():
    net = tiny_net(tls_programs=[TlsProgram("b", "static", (TlsPhase(5, 5, 5, "GG"),))])
    codes = {v.code for v in validate_network(net)}
    assert "ORPHAN_TLS" in codes


def test_stop_parking_polygon_violations():
    net = tiny_net(
        bus_stops=[BusStop("s", "ab", 500.0)],
        parking_areas=[ParkingArea("p", "ab", 5, 9)],
        buildings=[BuildingPoly("g", ((0.0, 0.0), (1.0, 1.0), (0.0, 0.0)))],
    )
    codes = {v.code for v in validate_network(net)}
    assert {"STOP_POSITION", "PARKING_OCCUPANCY", "POLYGON_VERTICES"} <= codes


def test_unreachable_edge_detected():
    junctions = [
        Junction("a", 0, 0, kind="dead_end"),
        Junction("b", 10, 0),
        Junction("x", 0, 10),
        Junction("y", 10, 10),
    ]
    edges = [
        Edge("ab", "a", "b", 10.0),
        Edge("ba", "b", "a", 10.0),
        # bus-only island: cannot be seeded by demand, not at a dead end
        Edge("xy", "x", "y", 10.0, bus_only=True),
    ]
    net = RoadNetwork(junctions, edges)
    assert [v.code for v in validate_network(net)] == ["UNREACHABLE"]


# -- routing -----------------------------------------------------------------


def test_shortest_path_includes_both_endpoints():
    net = tiny_net()
    route = shortest_path(net, "ab", "bc")
    assert route == ["ab", "bc"]
    assert route_cost(net, route) == pytest.approx(free_flow_time(net.edges["ab"]) * 2)


def test_no_path_raises():
    # both edges run a->b and b has no outgoing edge, so neither can ever
    # be reached from the other
    junctions = [Junction("a", 0, 0, kind="dead_end"), Junction("b", 1, 0, kind="dead_end")]
    edges = [Edge("ab", "a", "b", 1.0), Edge("xb", "a", "b", 1.0)]
    net = RoadNetwork(junctions, edges)
    with pytest.raises(NoPathError):
        shortest_path(net, "ab", "xb")


def test_negative_weight_rejected():
    net = tiny_net()
    with pytest.raises(ValueError):
        shortest_path(net, "ab", "bc", weight=lambda e: -1.0)


def test_infinite_weight_edges_are_impassable():
    junctions = [
        Junction("a", 0, 0, kind="dead_end"),
        Junction("b", 1, 0),
        Junction("c", 2, 0),
        Junction("d", 3, 0, kind="dead_end"),
    ]
    edges = [
        Edge("ab", "a", "b", 1.0),
        Edge("bc_slow", "b", "c", 1.0),
        Edge("bc_bus", "b", "c", 0.5, bus_only=True),
        Edge("cd", "c", "d", 1.0),
    ]
    net = RoadNetwork(junctions, edges)
    weight = lambda e: math.inf if e.bus_only else e.length
    route = shortest_path(net, "ab", "cd", weight=weight)
    assert route == ["ab", "bc_slow", "cd"]


def test_grid_corner_to_corner_route_is_connected():
    net = fixtures.grid_network()
    route = shortest_path(net, "e00_01", "e34_44")
    for a, b in zip(route, route[1:]):
        assert b in net.successors[a]
    # 200 m blocks at 13.89 m/s: straightest route costs 8 edges
    assert route_cost(net, route) == pytest.approx(8 * 200.0 / 13.89)


# -- Bellman-Ford oracle -----------------------------------------------------


def bellman_ford(net, source, weight):
    w = {eid: weight(net.edges[eid]) for eid in net.edges}
    dist = {source: w[source]}
    for _ in range(len(net.edges)):
        changed = False
        for eid, d in sorted(dist.items()):
            for succ in net.successors[eid]:
                nd = d + w[succ]
                if nd < dist.get(succ, math.inf):
                    dist[succ] = nd
                    changed = True
        if not changed:
            break
    return dist


def random_network(rng):
    n_j = rng.randint(2, 50)
    junctions = [
        Junction(f"j{i}", float(rng.randint(0, 1000)), float(rng.randint(0, 1000)))
        for i in range(n_j)
    ]
    n_e = rng.randint(1, 200)
    edges = []
    for i in range(n_e):
        a, b = rng.sample(range(n_j), 2)
        edges.append(
            Edge(f"e{i}", f"j{a}", f"j{b}", float(rng.randint(1, 500)), speed_limit=10.0)
        )
    return RoadNetwork(junctions, edges)


def test_dijkstra_matches_bellman_ford_on_random_graphs():
    rng = random.Random(20240915)
    weight = lambda e: e.length  # integer lengths keep float sums exact
    for _ in range(100):
        net = random_network(rng)
        source = rng.choice(sorted(net.edges))
        oracle = bellman_ford(net, source, weight)
        dist, pred = shortest_paths_from(net, source, weight=weight)
        assert dist == oracle
        # spot-check one reconstructed route end to end
        if len(dist) > 1:
            target = sorted(dist)[-1]
            route = shortest_path(net, source, target, weight=weight)
            assert route[0] == source and route[-1] == target
            assert route_cost(net, route, weight=weight) == dist[target]
            for a, b in zip(route, route[1:]):
                assert b in net.successors[a]
