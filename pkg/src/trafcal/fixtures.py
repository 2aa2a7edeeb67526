"""Bundled synthetic scenarios.

Three families: a 5x5 signalised street grid, a symmetric two-route
network for assignment experiments, and a "twin" scenario on the grid
where the measured detector data is produced by a hidden ground-truth
simulation, so the best-fitting rerouting probability is known exactly.
"""

from __future__ import annotations

import datetime
import random
from dataclasses import dataclass

from trafcal.demandgen import (
    CityGate,
    DemandConfig,
    DistrictStats,
    School,
    Trip,
    TripTable,
    WorkHours,
)
from trafcal.microsim import BusLine, Detector, SimConfig
from trafcal.netmodel import (
    BusStop,
    Edge,
    Junction,
    RoadNetwork,
    TlsPhase,
    TlsProgram,
)

GRID_N = 5
GRID_SPACING = 200.0
GRID_SPEED = 13.89  # 50 km/h

GREEN_S = 42.0
YELLOW_S = 3.0
GREEN_MIN_S = 5.0
GREEN_MAX_S = 60.0

TWIN_TRUE_P = 0.6
TWIN_DATES = (
    datetime.date(2023, 10, 3),  # Tue
    datetime.date(2023, 10, 4),  # Wed
    datetime.date(2023, 10, 5),  # Thu
)


# ---------------------------------------------------------------------------
# Street grid
# ---------------------------------------------------------------------------


def _jid(r: int, c: int) -> str:
    return f"n{r}{c}"


def _eid(r1: int, c1: int, r2: int, c2: int) -> str:
    return f"e{r1}{c1}_{r2}{c2}"


def grid_network(
    n: int = GRID_N,
    spacing: float = GRID_SPACING,
    speed_limit: float = GRID_SPEED,
    lane_count: int = 1,
    logic: str = "static",
    bus_stops: tuple[BusStop, ...] = (),
) -> RoadNetwork:
    """n x n junction grid, one bidirectional street between neighbours.

    Interior junctions carry a four-phase signal program (north-south
    green, amber, east-west green, amber). For n=5 that is 25 junctions,
    80 directed edges and 9 signalised junctions.
    """
    if n < 2:
        raise ValueError("grid needs at least 2x2 junctions")
    junctions = []
    for r in range(n):
        for c in range(n):
            interior = 0 < r < n - 1 and 0 < c < n - 1
            junctions.append(
                Junction(
                    id=_jid(r, c),
                    x=c * spacing,
                    y=r * spacing,
                    kind="traffic_light" if interior else "plain",
                )
            )
    edges = []
    for r in range(n):
        for c in range(n):
            for r2, c2 in ((r, c + 1), (r + 1, c)):
                if r2 >= n or c2 >= n:
                    continue
                for (fr, fc), (to_r, to_c) in (((r, c), (r2, c2)), ((r2, c2), (r, c))):
                    edges.append(
                        Edge(
                            id=_eid(fr, fc, to_r, to_c),
                            from_junction=_jid(fr, fc),
                            to_junction=_jid(to_r, to_c),
                            length=spacing,
                            lane_count=lane_count,
                            speed_limit=speed_limit,
                        )
                    )

    bare = RoadNetwork(junctions, edges)
    programs = []
    for j in junctions:
        if j.kind != "traffic_light":
            continue
        conns = bare.connections(j.id)

        # the north-south approaches are the in-edges whose origin shares
        # the junction's x coordinate
        def from_same_column(conn: tuple[str, str]) -> bool:
            origin = bare.junctions[bare.edges[conn[0]].from_junction]
            return origin.x == j.x

        ns_green = "".join("G" if from_same_column(c) else "r" for c in conns)
        ns_amber = "".join("y" if from_same_column(c) else "r" for c in conns)
        ew_green = "".join("r" if from_same_column(c) else "G" for c in conns)
        ew_amber = "".join("r" if from_same_column(c) else "y" for c in conns)
        programs.append(
            TlsProgram(
                junction_id=j.id,
                logic=logic,
                phases=(
                    TlsPhase(GREEN_S, GREEN_MIN_S, GREEN_MAX_S, ns_green),
                    TlsPhase(YELLOW_S, YELLOW_S, YELLOW_S, ns_amber),
                    TlsPhase(GREEN_S, GREEN_MIN_S, GREEN_MAX_S, ew_green),
                    TlsPhase(YELLOW_S, YELLOW_S, YELLOW_S, ew_amber),
                ),
            )
        )
    return RoadNetwork(junctions, edges, programs, bus_stops=bus_stops)


def rush_trips(net: RoadNetwork, n: int = 5000, seed: int = 0) -> TripTable:
    """Random origin-destination trips clustered around two rush hours."""
    rng = random.Random(f"{seed}/fixture-rush")
    pool = sorted(e.id for e in net.edges.values() if not e.bus_only)
    trips = []
    for i in range(n):
        frm = rng.choice(pool)
        to = rng.choice(pool)
        if rng.random() < 0.6:
            depart = rng.gauss(8 * 3600.0, 1800.0)
        else:
            depart = rng.gauss(17 * 3600.0, 1800.0)
        depart = min(max(depart, 0.0), 86399.0)
        trips.append(Trip(f"r{i:05d}", depart, frm, to, "free_time"))
    return TripTable(trips)


# ---------------------------------------------------------------------------
# Two-route assignment fixture
# ---------------------------------------------------------------------------


def two_route_network(scale: float = 1.0) -> RoadNetwork:
    """One origin, one destination, two identical single-lane paths
    between them. The entry and exit edges are two-lane so the only
    bottleneck is the route choice itself."""
    junctions = [
        Junction("s", 0.0, 0.0, kind="dead_end"),
        Junction("a", 300.0 * scale, 0.0),
        Junction("m", 800.0 * scale, 0.0),
        Junction("t", 1100.0 * scale, 0.0),
    ]
    edges = [
        Edge("e_in", "s", "a", 300.0 * scale, lane_count=2, speed_limit=GRID_SPEED),
        Edge("e_dn", "a", "m", 500.0 * scale, lane_count=1, speed_limit=GRID_SPEED),
        Edge("e_up", "a", "m", 500.0 * scale, lane_count=1, speed_limit=GRID_SPEED),
        Edge("e_out", "m", "t", 300.0 * scale, lane_count=2, speed_limit=GRID_SPEED),
    ]
    return RoadNetwork(junctions, edges)


def two_route_trips(n: int = 200, interval: float = 1.0, begin: float = 0.0) -> TripTable:
    return TripTable(
        [
            Trip(f"v{i:04d}", begin + i * interval, "e_in", "e_out", "work")
            for i in range(n)
        ]
    )


# ---------------------------------------------------------------------------
# Twin experiment scenario
# ---------------------------------------------------------------------------


@dataclass
class TwinScenario:
    net: RoadNetwork
    districts: list[DistrictStats]
    gates: list[CityGate]
    schools: list[School]
    demand_config: DemandConfig
    detectors: list[Detector]
    bus_lines: list[BusLine]
    true_p: float = TWIN_TRUE_P


_TWIN_BRACKETS = (100, 80, 80, 40, 200, 200, 300, 300, 240, 100, 100, 40, 20)


def _edge_mid(net: RoadNetwork, eid: str) -> tuple[float, float]:
    e = net.edges[eid]
    a = net.junctions[e.from_junction]
    b = net.junctions[e.to_junction]
    return (a.x + b.x) / 2.0, (a.y + b.y) / 2.0


def twin_scenario(seed: int = 7) -> TwinScenario:
    """Congested grid day: four residential quadrants commute onto a
    central work corridor through signalised junctions, with external
    gate traffic, one school, one university and an hourly bus line."""
    stops = (
        BusStop("bs_w", "e00_01", 100.0, "west end"),
        BusStop("bs_m", "e02_03", 100.0, "middle"),
        BusStop("bs_e", "e03_04", 100.0, "east end"),
    )
    net = grid_network(bus_stops=stops)
    centre = 2 * GRID_SPACING

    quadrants = {"nw": [], "ne": [], "sw": [], "se": []}
    corridor = []
    for eid in sorted(net.edges):
        mx, my = _edge_mid(net, eid)
        if mx == centre or my == centre:
            corridor.append(eid)
        elif mx < centre and my < centre:
            quadrants["nw"].append(eid)
        elif mx > centre and my < centre:
            quadrants["ne"].append(eid)
        elif mx < centre and my > centre:
            quadrants["sw"].append(eid)
        else:
            quadrants["se"].append(eid)

    districts = [
        DistrictStats(
            id=f"d_{name}",
            edge_ids=tuple(edge_ids),
            inhabitants=1800,
            households=800,
            workers=900,
            work_positions=200,
            unemployed=80,
            vehicles=1000,
            age_brackets=_TWIN_BRACKETS,
        )
        for name, edge_ids in sorted(quadrants.items())
    ]
    districts.append(
        DistrictStats(
            id="d_centre",
            edge_ids=tuple(corridor),
            inhabitants=0,
            households=0,
            workers=0,
            work_positions=4000,
            unemployed=0,
            vehicles=0,
            age_brackets=(0,) * len(_TWIN_BRACKETS),
        )
    )

    gates = [
        CityGate("gate_nw", in_edge="e00_01", out_edge="e01_00",
                 incoming_share=0.5, outgoing_share=0.5),
        CityGate("gate_se", in_edge="e44_43", out_edge="e43_44",
                 incoming_share=0.5, outgoing_share=0.5),
    ]
    schools = [
        School("school_inner", "e11_12", age_min=6, age_max=17, capacity=150,
               opening_h=8 * 3600.0, closing_h=16 * 3600.0),
        School("uni_south", "e33_32", age_min=18, age_max=120, capacity=80,
               opening_h=9 * 3600.0, closing_h=18 * 3600.0),
    ]
    config = DemandConfig(
        car_rate=0.8,
        car_preference_rate=0.6,
        incoming_total=800,
        outgoing_total=600,
        work_hours=(
            WorkHours(8 * 3600.0, 17 * 3600.0, 0.6),
            WorkHours(6 * 3600.0, 14 * 3600.0, 0.25),
            WorkHours(14 * 3600.0, 22 * 3600.0, 0.15),
        ),
        departure_jitter_sd=900.0,
        free_time_rate=0.1,
        seed=seed,
    )

    detector_edges = [
        # the four approaches of the central junction
        "e12_22", "e21_22", "e23_22", "e32_22",
        # parallel streets one block out, where rerouted traffic shows up
        "e10_11", "e13_14", "e30_31", "e33_34",
    ]
    detectors = [
        Detector(f"det_{eid}", eid, lane=0, position=100.0) for eid in detector_edges
    ]

    bus_lines = [
        BusLine(
            id="bus_east",
            stop_sequence=("bs_w", "bs_m", "bs_e"),
            route=("e00_01", "e01_02", "e02_03", "e03_04"),
            departures=tuple(float(h * 3600) for h in range(6, 21)),
            dwell=10.0,
        )
    ]
    return TwinScenario(net, districts, gates, schools, config, detectors, bus_lines)


def twin_sim_config(seed: int = 7, p: float = TWIN_TRUE_P) -> SimConfig:
    return SimConfig(rerouting_probability=p, seed=seed)
