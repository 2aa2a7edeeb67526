"""Road network data model: loading, validation, and shortest-path routing.

The network is a directed graph of edges (road segments) and junctions
(intersections or dead ends), carrying traffic-light programs, bus stops,
parking areas, and building polygons. Networks are immutable after
construction and safe for concurrent read access.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

JUNCTION_KINDS = ("plain", "traffic_light", "dead_end")
EDGE_CATEGORIES = ("normal", "tunnel", "under_building", "under_bridge")
TLS_LOGICS = ("static", "actuated")
TLS_STATE_CHARS = frozenset("Gry")


class NetworkFormatError(ValueError):
    """Raised when a network file does not parse under the schema."""


class DanglingReferenceError(NetworkFormatError):
    """Raised when a record references an id that does not exist."""

    def __init__(self, where: str, ref: str):
        super().__init__(f"{where}: reference to unknown id '{ref}'")
        self.ref = ref


class NoPathError(Exception):
    """Raised when no route exists between the requested edges."""

    def __init__(self, from_edge: str, to_edge: str):
        super().__init__(f"no path from edge '{from_edge}' to edge '{to_edge}'")
        self.from_edge = from_edge
        self.to_edge = to_edge


@dataclass(frozen=True)
class Junction:
    id: str
    x: float
    y: float
    kind: str = "plain"


@dataclass(frozen=True)
class Edge:
    """Directed road segment between two junctions."""

    id: str
    from_junction: str
    to_junction: str
    length: float
    lane_count: int = 1
    speed_limit: float = 13.89
    category: str = "normal"
    bus_only: bool = False


@dataclass(frozen=True)
class TlsPhase:
    duration: float
    min_duration: float
    max_duration: float
    state: str


@dataclass(frozen=True)
class TlsProgram:
    """Signal program for one junction; state strings index the junction's
    connection list (one character per controlled connection)."""

    junction_id: str
    logic: str
    phases: tuple[TlsPhase, ...]

    @property
    def cycle_time(self) -> float:
        return sum(p.duration for p in self.phases)


@dataclass(frozen=True)
class BusStop:
    id: str
    edge_id: str
    position: float
    name: str = ""


@dataclass(frozen=True)
class ParkingArea:
    id: str
    edge_id: str
    capacity: int
    initial_occupancy: int = 0


@dataclass(frozen=True)
class BuildingPoly:
    """Closed polygon outline; stored and re-emitted, consumed by nothing."""

    id: str
    vertices: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Violation:
    code: str
    subject_id: str
    message: str


class RoadNetwork:
    """Cross-linked, read-only road network.

    Construction resolves all references and precomputes per-junction
    adjacency and the per-edge successor lists used by routing and the
    simulator. Edge-to-edge transitions follow the junction connection
    lists (U-turns are dropped whenever another movement exists).
    """

    def __init__(
        self,
        junctions: Iterable[Junction],
        edges: Iterable[Edge],
        tls_programs: Iterable[TlsProgram] = (),
        bus_stops: Iterable[BusStop] = (),
        parking_areas: Iterable[ParkingArea] = (),
        buildings: Iterable[BuildingPoly] = (),
    ):
        self.junctions = _index_by_id(junctions, "junctions")
        self.edges = _index_by_id(edges, "edges")
        self.bus_stops = _index_by_id(bus_stops, "bus_stops")
        self.parking_areas = _index_by_id(parking_areas, "parking")
        self.buildings = _index_by_id(buildings, "buildings")

        self.tls_programs: dict[str, TlsProgram] = {}
        for prog in tls_programs:
            if prog.junction_id in self.tls_programs:
                raise NetworkFormatError(
                    f"tls: duplicate program for junction '{prog.junction_id}'"
                )
            self.tls_programs[prog.junction_id] = prog

        for edge in self.edges.values():
            for jid in (edge.from_junction, edge.to_junction):
                if jid not in self.junctions:
                    raise DanglingReferenceError(f"edges['{edge.id}']", jid)
        for prog in self.tls_programs.values():
            if prog.junction_id not in self.junctions:
                raise DanglingReferenceError("tls", prog.junction_id)
        for stop in self.bus_stops.values():
            if stop.edge_id not in self.edges:
                raise DanglingReferenceError(f"bus_stops['{stop.id}']", stop.edge_id)
        for park in self.parking_areas.values():
            if park.edge_id not in self.edges:
                raise DanglingReferenceError(f"parking['{park.id}']", park.edge_id)

        out_edges: dict[str, list[str]] = {jid: [] for jid in self.junctions}
        in_edges: dict[str, list[str]] = {jid: [] for jid in self.junctions}
        for edge in self.edges.values():
            out_edges[edge.from_junction].append(edge.id)
            in_edges[edge.to_junction].append(edge.id)
        self.out_edges = {j: tuple(sorted(ids)) for j, ids in out_edges.items()}
        self.in_edges = {j: tuple(sorted(ids)) for j, ids in in_edges.items()}

        self._connections = {
            jid: self._build_connections(jid) for jid in self.junctions
        }
        successors: dict[str, list[str]] = {eid: [] for eid in self.edges}
        for conns in self._connections.values():
            for ein, eout in conns:
                successors[ein].append(eout)
        self.successors = {e: tuple(sorted(s)) for e, s in successors.items()}

    def _build_connections(self, junction_id: str) -> tuple[tuple[str, str], ...]:
        conns: list[tuple[str, str]] = []
        for ein_id in self.in_edges[junction_id]:
            ein = self.edges[ein_id]
            outs = self.out_edges[junction_id]
            non_uturn = [
                eid
                for eid in outs
                if not (
                    self.edges[eid].from_junction == ein.to_junction
                    and self.edges[eid].to_junction == ein.from_junction
                )
            ]
            # keep the U-turn only when it is the sole way onward
            chosen = non_uturn if non_uturn else list(outs)
            conns.extend((ein_id, eout_id) for eout_id in chosen)
        return tuple(sorted(conns))

    def connections(self, junction_id: str) -> tuple[tuple[str, str], ...]:
        """Ordered (in_edge, out_edge) movements controlled at a junction."""
        return self._connections[junction_id]

    def approaches(self, junction_id: str) -> tuple[str, ...]:
        return self.in_edges[junction_id]


def _index_by_id(items: Iterable, where: str) -> dict:
    index: dict = {}
    for item in items:
        if item.id in index:
            raise NetworkFormatError(f"{where}: duplicate id '{item.id}'")
        index[item.id] = item
    return index


def free_flow_time(edge: Edge) -> float:
    return edge.length / edge.speed_limit


# ---------------------------------------------------------------------------
# File format: one JSON document with top-level arrays.
# ---------------------------------------------------------------------------

_JUNCTION_FIELDS = {"id": str, "x": (int, float), "y": (int, float), "kind": str}
_EDGE_FIELDS = {
    "id": str,
    "from": str,
    "to": str,
    "length": (int, float),
    "lane_count": int,
    "speed_limit": (int, float),
    "category": str,
    "bus_only": bool,
}
_PHASE_FIELDS = {
    "duration": (int, float),
    "min_duration": (int, float),
    "max_duration": (int, float),
    "state": str,
}
_TLS_FIELDS = {"junction_id": str, "logic": str, "phases": list}
_STOP_FIELDS = {"id": str, "edge_id": str, "position": (int, float), "name": str}
_PARKING_FIELDS = {
    "id": str,
    "edge_id": str,
    "capacity": int,
    "initial_occupancy": int,
}
_BUILDING_FIELDS = {"id": str, "vertices": list}

_OPTIONAL = {
    "kind",
    "lane_count",
    "speed_limit",
    "category",
    "bus_only",
    "name",
    "initial_occupancy",
    "min_duration",
    "max_duration",
}


def _check_record(rec: dict, fields: dict, where: str) -> dict:
    if not isinstance(rec, dict):
        raise NetworkFormatError(f"{where}: expected an object, got {type(rec).__name__}")
    for key in rec:
        if key not in fields:
            raise NetworkFormatError(f"{where}: unknown field '{key}'")
    for key, types in fields.items():
        if key not in rec:
            if key in _OPTIONAL:
                continue
            raise NetworkFormatError(f"{where}: missing field '{key}'")
        if isinstance(rec[key], bool) and types is not bool:
            raise NetworkFormatError(f"{where}: field '{key}' has wrong type")
        if not isinstance(rec[key], types):
            raise NetworkFormatError(f"{where}: field '{key}' has wrong type")
    return rec


def _parse_enum(value: str, allowed: tuple, where: str, fieldname: str) -> str:
    if value not in allowed:
        raise NetworkFormatError(
            f"{where}: field '{fieldname}' must be one of {allowed}, got '{value}'"
        )
    return value


def network_from_dict(doc: dict) -> RoadNetwork:
    if not isinstance(doc, dict):
        raise NetworkFormatError("top level: expected a JSON object")
    known = {"junctions", "edges", "tls", "bus_stops", "parking", "buildings"}
    for key in doc:
        if key not in known:
            raise NetworkFormatError(f"top level: unknown field '{key}'")

    junctions = []
    for i, rec in enumerate(doc.get("junctions", [])):
        where = f"junctions[{i}]"
        rec = _check_record(rec, _JUNCTION_FIELDS, where)
        junctions.append(
            Junction(
                id=rec["id"],
                x=float(rec["x"]),
                y=float(rec["y"]),
                kind=_parse_enum(rec.get("kind", "plain"), JUNCTION_KINDS, where, "kind"),
            )
        )

    edges = []
    for i, rec in enumerate(doc.get("edges", [])):
        where = f"edges[{i}]"
        rec = _check_record(rec, _EDGE_FIELDS, where)
        edges.append(
            Edge(
                id=rec["id"],
                from_junction=rec["from"],
                to_junction=rec["to"],
                length=float(rec["length"]),
                lane_count=rec.get("lane_count", 1),
                speed_limit=float(rec.get("speed_limit", 13.89)),
                category=_parse_enum(
                    rec.get("category", "normal"), EDGE_CATEGORIES, where, "category"
                ),
                bus_only=rec.get("bus_only", False),
            )
        )

    programs = []
    for i, rec in enumerate(doc.get("tls", [])):
        where = f"tls[{i}]"
        rec = _check_record(rec, _TLS_FIELDS, where)
        phases = []
        for k, ph in enumerate(rec["phases"]):
            ph = _check_record(ph, _PHASE_FIELDS, f"{where}.phases[{k}]")
            duration = float(ph["duration"])
            phases.append(
                TlsPhase(
                    duration=duration,
                    min_duration=float(ph.get("min_duration", duration)),
                    max_duration=float(ph.get("max_duration", duration)),
                    state=ph["state"],
                )
            )
        programs.append(
            TlsProgram(
                junction_id=rec["junction_id"],
                logic=_parse_enum(rec["logic"], TLS_LOGICS, where, "logic"),
                phases=tuple(phases),
            )
        )

    stops = []
    for i, rec in enumerate(doc.get("bus_stops", [])):
        where = f"bus_stops[{i}]"
        rec = _check_record(rec, _STOP_FIELDS, where)
        stops.append(
            BusStop(
                id=rec["id"],
                edge_id=rec["edge_id"],
                position=float(rec["position"]),
                name=rec.get("name", ""),
            )
        )

    parking = []
    for i, rec in enumerate(doc.get("parking", [])):
        where = f"parking[{i}]"
        rec = _check_record(rec, _PARKING_FIELDS, where)
        parking.append(
            ParkingArea(
                id=rec["id"],
                edge_id=rec["edge_id"],
                capacity=rec["capacity"],
                initial_occupancy=rec.get("initial_occupancy", 0),
            )
        )

    buildings = []
    for i, rec in enumerate(doc.get("buildings", [])):
        where = f"buildings[{i}]"
        rec = _check_record(rec, _BUILDING_FIELDS, where)
        verts = []
        for k, pt in enumerate(rec["vertices"]):
            if (
                not isinstance(pt, (list, tuple))
                or len(pt) != 2
                or not all(isinstance(c, (int, float)) for c in pt)
            ):
                raise NetworkFormatError(f"{where}.vertices[{k}]: expected [x, y]")
            verts.append((float(pt[0]), float(pt[1])))
        if verts and verts[0] != verts[-1]:
            verts.append(verts[0])  # normalize to a closed ring
        buildings.append(BuildingPoly(id=rec["id"], vertices=tuple(verts)))

    return RoadNetwork(
        junctions=junctions,
        edges=edges,
        tls_programs=programs,
        bus_stops=stops,
        parking_areas=parking,
        buildings=buildings,
    )


def network_to_dict(net: RoadNetwork) -> dict:
    return {
        "junctions": [
            {"id": j.id, "x": j.x, "y": j.y, "kind": j.kind}
            for j in net.junctions.values()
        ],
        "edges": [
            {
                "id": e.id,
                "from": e.from_junction,
                "to": e.to_junction,
                "length": e.length,
                "lane_count": e.lane_count,
                "speed_limit": e.speed_limit,
                "category": e.category,
                "bus_only": e.bus_only,
            }
            for e in net.edges.values()
        ],
        "tls": [
            {
                "junction_id": p.junction_id,
                "logic": p.logic,
                "phases": [
                    {
                        "duration": ph.duration,
                        "min_duration": ph.min_duration,
                        "max_duration": ph.max_duration,
                        "state": ph.state,
                    }
                    for ph in p.phases
                ],
            }
            for p in net.tls_programs.values()
        ],
        "bus_stops": [
            {"id": s.id, "edge_id": s.edge_id, "position": s.position, "name": s.name}
            for s in net.bus_stops.values()
        ],
        "parking": [
            {
                "id": p.id,
                "edge_id": p.edge_id,
                "capacity": p.capacity,
                "initial_occupancy": p.initial_occupancy,
            }
            for p in net.parking_areas.values()
        ],
        "buildings": [
            {"id": b.id, "vertices": [[x, y] for x, y in b.vertices]}
            for b in net.buildings.values()
        ],
    }


def load_network(path) -> RoadNetwork:
    """Load and cross-link a network file, raising on schema violations."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(
                f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    return network_from_dict(doc)


def save_network(net: RoadNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def validate_network(net: RoadNetwork) -> list[Violation]:
    """Check every structural invariant; violations are data, not failures.

    The result is deterministic and sorted by (code, subject_id). An empty
    list means the network is internally consistent and every edge not
    attached to a dead end can be reached from some demand-capable
    (non-bus-only) edge.
    """
    out: list[Violation] = []

    for j in net.junctions.values():
        if not (math.isfinite(j.x) and math.isfinite(j.y)):
            out.append(Violation("NONFINITE_COORD", j.id, "junction coordinates must be finite"))

    for e in net.edges.values():
        if not e.length > 0:
            out.append(Violation("NONPOSITIVE_LENGTH", e.id, f"edge length {e.length} must be > 0"))
        if e.lane_count < 1:
            out.append(Violation("BAD_LANE_COUNT", e.id, f"lane_count {e.lane_count} must be >= 1"))
        if not e.speed_limit > 0:
            out.append(Violation("NONPOSITIVE_SPEED", e.id, f"speed_limit {e.speed_limit} must be > 0"))

    for j in net.junctions.values():
        if j.kind == "traffic_light" and j.id not in net.tls_programs:
            out.append(Violation("MISSING_TLS", j.id, "traffic_light junction has no program"))
    for prog in net.tls_programs.values():
        junction = net.junctions[prog.junction_id]
        if junction.kind != "traffic_light":
            out.append(Violation("ORPHAN_TLS", prog.junction_id, "program on a junction that is not a traffic light"))
        n_conn = len(net.connections(prog.junction_id))
        if not prog.phases:
            out.append(Violation("EMPTY_PROGRAM", prog.junction_id, "program has no phases"))
        for k, ph in enumerate(prog.phases):
            if len(ph.state) != n_conn:
                out.append(
                    Violation(
                        "PHASE_ARITY",
                        prog.junction_id,
                        f"phase {k} state length {len(ph.state)} != connection count {n_conn}",
                    )
                )
            if not set(ph.state) <= TLS_STATE_CHARS:
                out.append(Violation("PHASE_STATE_CHARS", prog.junction_id, f"phase {k} state has characters outside G/r/y"))
            if not (ph.min_duration <= ph.duration <= ph.max_duration):
                out.append(
                    Violation(
                        "PHASE_DURATION_BOUNDS",
                        prog.junction_id,
                        f"phase {k} durations must satisfy min <= duration <= max",
                    )
                )

    for stop in net.bus_stops.values():
        edge = net.edges[stop.edge_id]
        if not (0 <= stop.position <= edge.length):
            out.append(Violation("STOP_POSITION", stop.id, f"position {stop.position} outside edge '{edge.id}'"))

    for park in net.parking_areas.values():
        if park.capacity < 0:
            out.append(Violation("PARKING_CAPACITY", park.id, "capacity must be >= 0"))
        elif not (0 <= park.initial_occupancy <= park.capacity):
            out.append(Violation("PARKING_OCCUPANCY", park.id, "initial_occupancy outside [0, capacity]"))

    for b in net.buildings.values():
        if len(set(b.vertices)) < 3:
            out.append(Violation("POLYGON_VERTICES", b.id, "polygon needs at least 3 distinct vertices"))

    out.extend(_reachability_violations(net))
    out.sort(key=lambda v: (v.code, v.subject_id))
    return out


def _reachability_violations(net: RoadNetwork) -> list[Violation]:
    # BFS over edge successors from all demand-capable (non-bus-only) edges.
    reached = set(e.id for e in net.edges.values() if not e.bus_only)
    frontier = list(reached)
    while frontier:
        nxt = []
        for eid in frontier:
            for succ in net.successors[eid]:
                if succ not in reached:
                    reached.add(succ)
                    nxt.append(succ)
        frontier = nxt

    out = []
    for e in net.edges.values():
        if e.id in reached:
            continue
        touches_dead_end = (
            net.junctions[e.from_junction].kind == "dead_end"
            or net.junctions[e.to_junction].kind == "dead_end"
        )
        if not touches_dead_end:
            out.append(Violation("UNREACHABLE", e.id, "edge unreachable from any demand-capable edge"))
    return out


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------

WeightFn = Callable[[Edge], float]


def shortest_path(
    net: RoadNetwork,
    from_edge: str,
    to_edge: str,
    weight: Optional[WeightFn] = None,
) -> list[str]:
    """Minimum-cost edge sequence from from_edge to to_edge (both included).

    Costs accumulate the weight of every edge on the route, default weight
    being the free-flow travel time length/speed_limit. Edges with infinite
    weight are skipped. Ties resolve deterministically by edge id ordering.
    Raises NoPathError when the destination cannot be reached.
    """
    dist, pred = _dijkstra(net, from_edge, weight, target=to_edge)
    if to_edge not in dist:
        raise NoPathError(from_edge, to_edge)
    return _reconstruct(pred, from_edge, to_edge)


def shortest_paths_from(
    net: RoadNetwork, from_edge: str, weight: Optional[WeightFn] = None
) -> tuple[dict[str, float], dict[str, str]]:
    """Single-source variant: costs and predecessor map for all reachable edges."""
    return _dijkstra(net, from_edge, weight, target=None)


def reconstruct_route(pred: dict[str, str], from_edge: str, to_edge: str) -> list[str]:
    return _reconstruct(pred, from_edge, to_edge)


def _dijkstra(
    net: RoadNetwork,
    from_edge: str,
    weight: Optional[WeightFn],
    target: Optional[str],
) -> tuple[dict[str, float], dict[str, str]]:
    if from_edge not in net.edges:
        raise KeyError(f"unknown edge '{from_edge}'")
    if target is not None and target not in net.edges:
        raise KeyError(f"unknown edge '{target}'")
    if weight is None:
        weight = free_flow_time

    edges = net.edges
    successors = net.successors

    def edge_weight(eid: str) -> float:
        w = weight(edges[eid])
        if w < 0:
            raise ValueError(f"negative weight {w} on edge '{eid}'")
        return w

    dist: dict[str, float] = {}
    pred: dict[str, str] = {}
    w0 = edge_weight(from_edge)
    if math.isinf(w0):
        return dist, pred
    seen = {from_edge: w0}
    heap: list[tuple[float, str]] = [(w0, from_edge)]
    while heap:
        d, eid = heapq.heappop(heap)
        if eid in dist:
            continue
        dist[eid] = d
        if eid == target:
            break
        for succ in successors[eid]:
            if succ in dist:
                continue
            w = edge_weight(succ)
            if math.isinf(w):
                continue
            nd = d + w
            if succ not in seen or nd < seen[succ]:
                seen[succ] = nd
                pred[succ] = eid
                heapq.heappush(heap, (nd, succ))
    return dist, pred


def _reconstruct(pred: dict[str, str], from_edge: str, to_edge: str) -> list[str]:
    route = [to_edge]
    while route[-1] != from_edge:
        route.append(pred[route[-1]])
    route.reverse()
    return route


def route_cost(net: RoadNetwork, route: list[str], weight: Optional[WeightFn] = None) -> float:
    if weight is None:
        weight = free_flow_time
    return sum(weight(net.edges[eid]) for eid in route)
