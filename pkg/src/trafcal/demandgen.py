"""Activity-based travel demand from district demographics.

Trips come from five sources: resident workers commuting by shift,
school drop-off chains, university students, external traffic through
city gates, and midday errands of non-working adults. Everything is
sampled from one seeded stream in a fixed iteration order, so a given
statistics file and seed always produce the same trip table.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from trafcal import netmodel
from trafcal.microsim.simio import RoutePlan

AGE_BRACKETS = (
    (0, 5), (6, 9), (10, 14), (15, 17), (18, 24), (25, 29), (30, 39),
    (40, 49), (50, 59), (60, 64), (65, 74), (75, 84), (85, 120),
)
ADULT_BRACKET_START = 4  # first bracket whose lower bound is >= 18

TRIP_PURPOSES = (
    "work", "school_dropoff", "university", "incoming", "outgoing", "free_time",
)

DAY_S = 86400.0
FREE_TIME_EARLIEST = 36000.0  # 10:00
FREE_TIME_LATEST = 50400.0  # 14:00
FREE_TIME_STAY_MIN = 1800.0
FREE_TIME_STAY_MAX = 7200.0


class DemandError(ValueError):
    """Raised when demand inputs are inconsistent."""


@dataclass(frozen=True)
class DistrictStats:
    id: str
    edge_ids: tuple[str, ...]
    inhabitants: int
    households: int
    workers: int
    work_positions: int
    unemployed: int
    vehicles: int
    age_brackets: tuple[int, ...]


@dataclass(frozen=True)
class CityGate:
    id: str
    in_edge: str
    out_edge: str
    incoming_share: float
    outgoing_share: float


@dataclass(frozen=True)
class School:
    id: str
    edge_id: str
    age_min: int
    age_max: int
    capacity: int
    opening_h: float
    closing_h: float

    @property
    def is_university(self) -> bool:
        return self.age_min >= 18


@dataclass(frozen=True)
class WorkHours:
    opening_h: float
    closing_h: float
    worker_share: float


@dataclass(frozen=True)
class DemandConfig:
    car_rate: float
    car_preference_rate: float
    incoming_total: int
    outgoing_total: int
    work_hours: tuple[WorkHours, ...]
    departure_jitter_sd: float = 900.0
    free_time_rate: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class Trip:
    id: str
    depart: float
    from_edge: str
    to_edge: str
    purpose: str


@dataclass
class TripTable:
    trips: list[Trip] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trips)


@dataclass
class ExpandResult:
    routes: list[RoutePlan]
    no_path: list[str]  # trip ids with no usable route


# ---------------------------------------------------------------------------
# Input validation
# ---------------------------------------------------------------------------


def validate_inputs(
    stats: list[DistrictStats],
    gates: list[CityGate],
    schools: list[School],
    config: DemandConfig,
    net: netmodel.RoadNetwork,
) -> None:
    if not stats:
        raise DemandError("at least one district is required")
    for d in stats:
        for name in ("inhabitants", "households", "workers", "work_positions",
                     "unemployed", "vehicles"):
            if getattr(d, name) < 0:
                raise DemandError(f"district '{d.id}': {name} must be >= 0")
        if len(d.age_brackets) != len(AGE_BRACKETS):
            raise DemandError(
                f"district '{d.id}': expected {len(AGE_BRACKETS)} age brackets"
            )
        if any(n < 0 for n in d.age_brackets):
            raise DemandError(f"district '{d.id}': age bracket counts must be >= 0")
        if sum(d.age_brackets) != d.inhabitants:
            raise DemandError(
                f"district '{d.id}': age brackets sum to {sum(d.age_brackets)}, "
                f"not {d.inhabitants}"
            )
        if not d.edge_ids:
            raise DemandError(f"district '{d.id}': needs at least one edge")
        for eid in d.edge_ids:
            if eid not in net.edges:
                raise DemandError(f"district '{d.id}': unknown edge '{eid}'")
    if config.incoming_total > 0 and not gates:
        raise DemandError("incoming_total > 0 but no city gates are defined")
    if config.outgoing_total > 0 and not gates:
        raise DemandError("outgoing_total > 0 but no city gates are defined")
    if gates:
        for attr in ("incoming_share", "outgoing_share"):
            total = sum(getattr(g, attr) for g in gates)
            if abs(total - 1.0) > 1e-9:
                raise DemandError(f"gate {attr}s sum to {total}, expected 1")
        for g in gates:
            for eid in (g.in_edge, g.out_edge):
                if eid not in net.edges:
                    raise DemandError(f"gate '{g.id}': unknown edge '{eid}'")
    for s in schools:
        if s.age_min > s.age_max:
            raise DemandError(f"school '{s.id}': age_min > age_max")
        if not s.opening_h < s.closing_h:
            raise DemandError(f"school '{s.id}': opening_h must precede closing_h")
        if s.edge_id not in net.edges:
            raise DemandError(f"school '{s.id}': unknown edge '{s.edge_id}'")
        if s.capacity < 0:
            raise DemandError(f"school '{s.id}': capacity must be >= 0")
    if not config.work_hours:
        raise DemandError("config: at least one work_hours entry is required")
    share_sum = sum(w.worker_share for w in config.work_hours)
    if abs(share_sum - 1.0) > 1e-9:
        raise DemandError(f"config: work_hours shares sum to {share_sum}, expected 1")
    for bound in ("car_rate", "car_preference_rate", "free_time_rate"):
        v = getattr(config, bound)
        if not 0.0 <= v <= 1.0:
            raise DemandError(f"config: {bound} must be in [0, 1]")
    if config.incoming_total < 0 or config.outgoing_total < 0:
        raise DemandError("config: gate totals must be >= 0")
    if config.departure_jitter_sd < 0:
        raise DemandError("config: departure_jitter_sd must be >= 0")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def cumulative_counts(values: list[float]) -> list[int]:
    """Integer counts whose running sums track the running sums of `values`;
    the total never drifts more than one from the exact sum."""
    out = []
    acc = 0.0
    assigned = 0
    for v in values:
        acc += v
        n = math.floor(acc + 0.5) - assigned
        if n < 0:
            n = 0
        out.append(n)
        assigned += n
    return out


def largest_remainder(total: int, shares: list[float]) -> list[int]:
    """Apportion `total` over shares, each result within one of exact."""
    exact = [total * s for s in shares]
    base = [math.floor(x) for x in exact]
    left = total - sum(base)
    order = sorted(range(len(shares)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def _weighted_pick(rng: random.Random, items: list, weights: list[float]):
    total = sum(weights)
    x = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if x < acc:
            return item
    return items[-1]


class _TravelTimes:
    """Free-flow travel-time estimates with per-origin caching."""

    def __init__(self, net: netmodel.RoadNetwork):
        self.net = net
        self._cache: dict[str, dict[str, float]] = {}

    def between(self, from_edge: str, to_edge: str) -> float:
        dist = self._cache.get(from_edge)
        if dist is None:
            dist, _ = netmodel.shortest_paths_from(self.net, from_edge, car_weight)
            self._cache[from_edge] = dist
        return dist.get(to_edge, 0.0)


def car_weight(edge: netmodel.Edge) -> float:
    """Routing weight for private cars: free-flow time, bus lanes barred."""
    if edge.bus_only:
        return math.inf
    return edge.length / edge.speed_limit


# ---------------------------------------------------------------------------
# Trip generation
# ---------------------------------------------------------------------------


def generate_trips(
    stats: list[DistrictStats],
    gates: list[CityGate],
    schools: list[School],
    config: DemandConfig,
    net: netmodel.RoadNetwork,
) -> TripTable:
    """Sample the day's car trips from the district statistics.

    Driving workers per district follow workers * car_rate *
    car_preference_rate with cumulative rounding; each picks a workplace
    district proportional to work_positions, departs early enough to reach
    it by the shift's opening hour (half-normal jitter on top of the
    free-flow estimate) and returns at the closing hour. Some outbound
    legs become drop-off chains via a school. Gate flows are apportioned
    by the gate shares of the car-equivalent external totals.
    """
    validate_inputs(stats, gates, schools, config, net)
    rng = random.Random(f"{config.seed}/demandgen")
    tt = _TravelTimes(net)
    drive_p = config.car_rate * config.car_preference_rate
    trips: list[Trip] = []
    counter = 0

    def add(depart: float, from_edge: str, to_edge: str, purpose: str) -> None:
        nonlocal counter
        depart = min(max(depart, 0.0), DAY_S - 1.0)
        trips.append(Trip(f"t{counter:07d}", depart, from_edge, to_edge, purpose))
        counter += 1

    def commute_depart(home: str, dest: str, opening_h: float) -> float:
        est = tt.between(home, dest)
        return opening_h - est - abs(rng.gauss(0.0, config.departure_jitter_sd))

    work_pool = [d for d in stats if d.work_positions > 0]
    work_weights = [float(d.work_positions) for d in work_pool]

    # children enrol into schools, adults into universities, both capacity
    # bounded and proportional to remaining places
    remaining = {s.id: s.capacity for s in schools}
    assigned_schools: dict[str, list[School]] = {d.id: [] for d in stats}
    assigned_unis: dict[str, list[School]] = {d.id: [] for d in stats}
    for d in stats:
        for bi, (lo, hi) in enumerate(AGE_BRACKETS):
            adult = lo >= 18
            fitting = [
                s for s in schools
                if s.age_min <= lo and hi <= s.age_max and s.is_university == adult
            ]
            if not fitting:
                continue
            target = assigned_unis[d.id] if adult else assigned_schools[d.id]
            for _ in range(d.age_brackets[bi]):
                open_seats = [s for s in fitting if remaining[s.id] > 0]
                if not open_seats:
                    break
                school = _weighted_pick(
                    rng, open_seats, [float(remaining[s.id]) for s in open_seats]
                )
                remaining[school.id] -= 1
                target.append(school)

    driving = cumulative_counts([d.workers * drive_p for d in stats])
    for d, n_drivers in zip(stats, driving):
        chains = assigned_schools[d.id]
        n_chain = min(
            n_drivers, math.floor(len(chains) * drive_p + 0.5)
        )
        per_shift = cumulative_counts(
            [n_drivers * w.worker_share for w in config.work_hours]
        )
        chained = 0
        for shift, n_shift in zip(config.work_hours, per_shift):
            for _ in range(n_shift):
                home = rng.choice(d.edge_ids)
                if not work_pool:
                    raise DemandError("no district offers work positions")
                wd = _weighted_pick(rng, work_pool, work_weights)
                work_edge = rng.choice(wd.edge_ids)
                if chained < n_chain:
                    school = chains[chained]
                    chained += 1
                    add(
                        commute_depart(home, school.edge_id, school.opening_h),
                        home, school.edge_id, "school_dropoff",
                    )
                    add(school.opening_h, school.edge_id, work_edge, "work")
                else:
                    add(commute_depart(home, work_edge, shift.opening_h),
                        home, work_edge, "work")
                add(shift.closing_h, work_edge, home, "work")

    for d in stats:
        unis = assigned_unis[d.id]
        n_students = math.floor(len(unis) * drive_p + 0.5)
        for i in range(n_students):
            uni = unis[i]
            home = rng.choice(d.edge_ids)
            add(commute_depart(home, uni.edge_id, uni.opening_h),
                home, uni.edge_id, "university")
            add(uni.closing_h, uni.edge_id, home, "university")

    # external traffic through the gates, car-equivalent by mode preference
    home_pool = [d for d in stats if d.inhabitants > 0]
    home_weights = [float(d.inhabitants) for d in home_pool]
    if gates:
        n_in = round(config.incoming_total * config.car_preference_rate)
        for g, n_gate in zip(gates, largest_remainder(n_in, [g.incoming_share for g in gates])):
            for _ in range(n_gate):
                wd = _weighted_pick(rng, work_pool, work_weights) if work_pool else None
                if wd is None:
                    raise DemandError("incoming traffic needs a district with work positions")
                work_edge = rng.choice(wd.edge_ids)
                shift = _weighted_pick(
                    rng, config.work_hours, [w.worker_share for w in config.work_hours]
                )
                add(commute_depart(g.in_edge, work_edge, shift.opening_h),
                    g.in_edge, work_edge, "incoming")
        n_out = round(config.outgoing_total * config.car_preference_rate)
        for g, n_gate in zip(gates, largest_remainder(n_out, [g.outgoing_share for g in gates])):
            for _ in range(n_gate):
                hd = _weighted_pick(rng, home_pool, home_weights) if home_pool else None
                if hd is None:
                    raise DemandError("outgoing traffic needs an inhabited district")
                home = rng.choice(hd.edge_ids)
                shift = _weighted_pick(
                    rng, config.work_hours, [w.worker_share for w in config.work_hours]
                )
                add(commute_depart(home, g.out_edge, shift.opening_h),
                    home, g.out_edge, "outgoing")

    # midday errands of non-working adults
    errand_edges = sorted(e.id for e in net.edges.values() if not e.bus_only)
    for d in stats:
        adults = sum(d.age_brackets[ADULT_BRACKET_START:])
        idle = max(0, adults - d.workers)
        n_free = math.floor(idle * config.free_time_rate + 0.5)
        for _ in range(n_free):
            home = rng.choice(d.edge_ids)
            dest = rng.choice(errand_edges)
            out = rng.uniform(FREE_TIME_EARLIEST, FREE_TIME_LATEST)
            stay = rng.uniform(FREE_TIME_STAY_MIN, FREE_TIME_STAY_MAX)
            add(out, home, dest, "free_time")
            add(out + stay, dest, home, "free_time")

    return TripTable(trips)


# ---------------------------------------------------------------------------
# Route expansion
# ---------------------------------------------------------------------------


def expand_routes(trips: TripTable, net: netmodel.RoadNetwork) -> ExpandResult:
    """Free-flow shortest route for every trip; unroutable trips end up in
    the no_path list instead of being dropped silently."""
    routes: list[RoutePlan] = []
    no_path: list[str] = []
    cache: dict[str, tuple[dict, dict]] = {}
    for trip in trips.trips:
        if trip.from_edge not in net.edges or trip.to_edge not in net.edges:
            no_path.append(trip.id)
            continue
        if trip.from_edge == trip.to_edge:
            routes.append(RoutePlan(trip.id, (trip.from_edge,), trip.depart))
            continue
        hit = cache.get(trip.from_edge)
        if hit is None:
            hit = netmodel.shortest_paths_from(net, trip.from_edge, car_weight)
            cache[trip.from_edge] = hit
        dist, pred = hit
        if trip.to_edge not in dist:
            no_path.append(trip.id)
            continue
        edges = netmodel.reconstruct_route(pred, trip.from_edge, trip.to_edge)
        routes.append(RoutePlan(trip.id, tuple(edges), trip.depart))
    return ExpandResult(routes, no_path)


# ---------------------------------------------------------------------------
# Trip table and statistics files
# ---------------------------------------------------------------------------

_TRIP_FIELDS = {
    "id": str,
    "depart": (int, float),
    "from_edge": str,
    "to_edge": str,
    "purpose": str,
}


def write_trips(table: TripTable, path) -> None:
    rows = [
        {
            "id": t.id,
            "depart": t.depart,
            "from_edge": t.from_edge,
            "to_edge": t.to_edge,
            "purpose": t.purpose,
        }
        for t in sorted(table.trips, key=lambda t: (t.depart, t.id))
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"trips": rows}, fh, indent=1)
        fh.write("\n")


def read_trips(path) -> TripTable:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DemandError(
                f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(doc, dict) or set(doc) - {"trips"}:
        raise DemandError("top level: expected an object with 'trips'")
    trips = []
    seen = set()
    for i, rec in enumerate(doc.get("trips", [])):
        where = f"trips[{i}]"
        if not isinstance(rec, dict):
            raise DemandError(f"{where}: expected an object")
        for key in rec:
            if key not in _TRIP_FIELDS:
                raise DemandError(f"{where}: unknown field '{key}'")
        for key, types in _TRIP_FIELDS.items():
            if key not in rec:
                raise DemandError(f"{where}: missing field '{key}'")
            if not isinstance(rec[key], types) or isinstance(rec[key], bool):
                raise DemandError(f"{where}: field '{key}' has wrong type")
        if rec["purpose"] not in TRIP_PURPOSES:
            raise DemandError(f"{where}: unknown purpose '{rec['purpose']}'")
        depart = float(rec["depart"])
        if not 0.0 <= depart < DAY_S:
            raise DemandError(f"{where}: depart {depart} outside [0, 86400)")
        if rec["id"] in seen:
            raise DemandError(f"{where}: duplicate trip id '{rec['id']}'")
        seen.add(rec["id"])
        trips.append(Trip(rec["id"], depart, rec["from_edge"], rec["to_edge"], rec["purpose"]))
    return TripTable(trips)


_DISTRICT_FIELDS = {
    "id": str, "edge_ids": list, "inhabitants": int, "households": int,
    "workers": int, "work_positions": int, "unemployed": int,
    "vehicles": int, "age_brackets": list,
}
_GATE_FIELDS = {
    "id": str, "in_edge": str, "out_edge": str,
    "incoming_share": (int, float), "outgoing_share": (int, float),
}
_SCHOOL_FIELDS = {
    "id": str, "edge_id": str, "age_min": int, "age_max": int,
    "capacity": int, "opening_h": (int, float), "closing_h": (int, float),
}
_HOURS_FIELDS = {
    "opening_h": (int, float), "closing_h": (int, float),
    "worker_share": (int, float),
}
_CONFIG_FIELDS = {
    "car_rate": (int, float), "car_preference_rate": (int, float),
    "incoming_total": int, "outgoing_total": int, "work_hours": list,
    "departure_jitter_sd": (int, float), "free_time_rate": (int, float),
    "seed": int,
}
_CONFIG_OPTIONAL = {"departure_jitter_sd", "free_time_rate", "seed"}


def _demand_check(rec, fields: dict, where: str, optional=frozenset()) -> dict:
    if not isinstance(rec, dict):
        raise DemandError(f"{where}: expected an object")
    for key in rec:
        if key not in fields:
            raise DemandError(f"{where}: unknown field '{key}'")
    for key, types in fields.items():
        if key not in rec:
            if key in optional:
                continue
            raise DemandError(f"{where}: missing field '{key}'")
        if not isinstance(rec[key], types) or isinstance(rec[key], bool):
            raise DemandError(f"{where}: field '{key}' has wrong type")
    return rec


def load_statistics(path) -> tuple[list[DistrictStats], list[CityGate], list[School], DemandConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DemandError(
                f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(doc, dict):
        raise DemandError("top level: expected a JSON object")
    known = {"districts", "gates", "schools", "config"}
    for key in doc:
        if key not in known:
            raise DemandError(f"top level: unknown field '{key}'")
    if "config" not in doc:
        raise DemandError("top level: missing 'config'")

    districts = []
    for i, rec in enumerate(doc.get("districts", [])):
        where = f"districts[{i}]"
        rec = _demand_check(rec, _DISTRICT_FIELDS, where)
        if not all(isinstance(e, str) for e in rec["edge_ids"]):
            raise DemandError(f"{where}: edge_ids must be strings")
        if not all(isinstance(n, int) and not isinstance(n, bool) for n in rec["age_brackets"]):
            raise DemandError(f"{where}: age_brackets must be integers")
        districts.append(
            DistrictStats(
                id=rec["id"], edge_ids=tuple(rec["edge_ids"]),
                inhabitants=rec["inhabitants"], households=rec["households"],
                workers=rec["workers"], work_positions=rec["work_positions"],
                unemployed=rec["unemployed"], vehicles=rec["vehicles"],
                age_brackets=tuple(rec["age_brackets"]),
            )
        )

    gates = []
    for i, rec in enumerate(doc.get("gates", [])):
        rec = _demand_check(rec, _GATE_FIELDS, f"gates[{i}]")
        gates.append(
            CityGate(
                id=rec["id"], in_edge=rec["in_edge"], out_edge=rec["out_edge"],
                incoming_share=float(rec["incoming_share"]),
                outgoing_share=float(rec["outgoing_share"]),
            )
        )

    schools = []
    for i, rec in enumerate(doc.get("schools", [])):
        rec = _demand_check(rec, _SCHOOL_FIELDS, f"schools[{i}]")
        schools.append(
            School(
                id=rec["id"], edge_id=rec["edge_id"], age_min=rec["age_min"],
                age_max=rec["age_max"], capacity=rec["capacity"],
                opening_h=float(rec["opening_h"]), closing_h=float(rec["closing_h"]),
            )
        )

    cfg = _demand_check(doc["config"], _CONFIG_FIELDS, "config", _CONFIG_OPTIONAL)
    hours = []
    for i, rec in enumerate(cfg["work_hours"]):
        rec = _demand_check(rec, _HOURS_FIELDS, f"config.work_hours[{i}]")
        hours.append(
            WorkHours(
                opening_h=float(rec["opening_h"]),
                closing_h=float(rec["closing_h"]),
                worker_share=float(rec["worker_share"]),
            )
        )
    config = DemandConfig(
        car_rate=float(cfg["car_rate"]),
        car_preference_rate=float(cfg["car_preference_rate"]),
        incoming_total=cfg["incoming_total"],
        outgoing_total=cfg["outgoing_total"],
        work_hours=tuple(hours),
        departure_jitter_sd=float(cfg.get("departure_jitter_sd", 900.0)),
        free_time_rate=float(cfg.get("free_time_rate", 0.1)),
        seed=cfg.get("seed", 0),
    )
    return districts, gates, schools, config


def save_statistics(
    stats: list[DistrictStats],
    gates: list[CityGate],
    schools: list[School],
    config: DemandConfig,
    path,
) -> None:
    doc = {
        "districts": [
            {
                "id": d.id, "edge_ids": list(d.edge_ids),
                "inhabitants": d.inhabitants, "households": d.households,
                "workers": d.workers, "work_positions": d.work_positions,
                "unemployed": d.unemployed, "vehicles": d.vehicles,
                "age_brackets": list(d.age_brackets),
            }
            for d in stats
        ],
        "gates": [
            {
                "id": g.id, "in_edge": g.in_edge, "out_edge": g.out_edge,
                "incoming_share": g.incoming_share,
                "outgoing_share": g.outgoing_share,
            }
            for g in gates
        ],
        "schools": [
            {
                "id": s.id, "edge_id": s.edge_id, "age_min": s.age_min,
                "age_max": s.age_max, "capacity": s.capacity,
                "opening_h": s.opening_h, "closing_h": s.closing_h,
            }
            for s in schools
        ],
        "config": {
            "car_rate": config.car_rate,
            "car_preference_rate": config.car_preference_rate,
            "incoming_total": config.incoming_total,
            "outgoing_total": config.outgoing_total,
            "work_hours": [
                {
                    "opening_h": w.opening_h, "closing_h": w.closing_h,
                    "worker_share": w.worker_share,
                }
                for w in config.work_hours
            ],
            "departure_jitter_sd": config.departure_jitter_sd,
            "free_time_rate": config.free_time_rate,
            "seed": config.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
