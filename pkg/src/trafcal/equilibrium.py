"""Iterative user-equilibrium route assignment.

Each vehicle keeps a small set of alternative routes with costs and choice
probabilities. After every simulated iteration the chosen route's cost is
blended with the experienced travel time and probability mass shifts
pairwise towards cheaper alternatives, until average travel times settle.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field

from trafcal import netmodel
from trafcal.demandgen import TripTable, car_weight, expand_routes
from trafcal.microsim import RoutePlan, SimConfig, Simulation

GAWRON_BETA = 0.9
GAWRON_ALPHA = 0.5
MAX_ALTERNATIVES = 5


@dataclass
class Alternative:
    route: tuple[str, ...]
    cost: float
    probability: float


@dataclass
class RouteSet:
    """One vehicle's route alternatives; probabilities form a simplex."""

    trip_id: str
    alternatives: list[Alternative]
    chosen_index: int = 0

    def check(self) -> None:
        total = math.fsum(a.probability for a in self.alternatives)
        assert abs(total - 1.0) <= 1e-9, f"probabilities sum to {total}"
        assert all(a.probability >= 0 for a in self.alternatives)
        assert all(a.cost >= 0 for a in self.alternatives)
        assert 0 <= self.chosen_index < len(self.alternatives)


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    avg_speed: float
    time_loss: float
    avg_travel_time: float


@dataclass
class DuaResult:
    route_sets: dict[str, RouteSet]
    metrics: list[IterationMetrics]
    converged: bool
    final_plans: list[RoutePlan] = field(default_factory=list)


def gawron_update(
    rs: RouteSet,
    experienced_cost: float,
    beta: float = GAWRON_BETA,
    alpha: float = GAWRON_ALPHA,
) -> RouteSet:
    """Blend the experienced cost into the chosen route and shift choice
    probability pairwise towards whichever of each pair is now cheaper.

    The update keeps each pair's combined mass, so the simplex is preserved
    up to rounding; a final renormalization removes the rounding.
    """
    if experienced_cost < 0:
        raise ValueError("experienced_cost must be >= 0")
    chosen = rs.alternatives[rs.chosen_index]
    chosen.cost = (1.0 - alpha) * chosen.cost + alpha * experienced_cost
    c_r = chosen.cost
    for i, other in enumerate(rs.alternatives):
        if i == rs.chosen_index:
            continue
        c_s = other.cost
        denom = c_s + c_r
        delta = beta * (c_s - c_r) / denom if denom > 0 else 0.0
        p_r, p_s = chosen.probability, other.probability
        pair = p_r + p_s
        if pair <= 0:
            continue
        p_r_new = p_r * pair / (p_r + p_s * math.exp(-delta))
        # the exchange stays inside the pair mathematically; rounding of
        # the quotient must not push it a last-place unit outside
        p_r_new = min(max(p_r_new, 0.0), pair)
        chosen.probability = p_r_new
        other.probability = pair - p_r_new
    total = math.fsum(a.probability for a in rs.alternatives)
    if total > 0:
        for a in rs.alternatives:
            a.probability /= total
    else:
        even = 1.0 / len(rs.alternatives)
        for a in rs.alternatives:
            a.probability = even
    return rs


def convergence_check(
    metrics: list[IterationMetrics], tol: float, window: int
) -> bool:
    """True once the last `window` average travel times agree within tol
    (max pairwise relative deviation); needs that many iterations first."""
    if not metrics:
        raise ValueError("metrics must be nonempty")
    if len(metrics) < window:
        return False
    tail = [m.avg_travel_time for m in metrics[-window:]]
    lo, hi = min(tail), max(tail)
    if lo <= 0:
        return hi == lo
    return (hi - lo) / lo < tol


def _experienced_cost(
    result, route: tuple[str, ...], net: netmodel.RoadNetwork
) -> float:
    """Travel time actually paid; trips cut off by the end of the run pay
    their time so far plus the free-flow remainder."""
    if result.arrived:
        return result.travel_time
    if result.insert_time is None:
        return netmodel.route_cost(net, list(route), car_weight)
    rest = sum(
        netmodel.free_flow_time(net.edges[eid]) for eid in route[result.edges_done:]
    )
    return result.time_in_net + rest


def dua_iterate(
    net: netmodel.RoadNetwork,
    trips: TripTable,
    config: SimConfig,
    max_iter: int = 50,
    tol: float = 0.01,
    window: int = 5,
    beta: float = GAWRON_BETA,
    alpha: float = GAWRON_ALPHA,
    max_alternatives: int = MAX_ALTERNATIVES,
) -> DuaResult:
    """Simulate, reweigh, and re-choose routes until travel times settle.

    Iteration 0 loads everyone on the free-flow shortest path. Afterwards
    each round simulates the chosen routes with rerouting disabled, folds
    experienced costs into the route sets, derives one new candidate route
    per vehicle from smoothed edge travel times, and samples next choices
    from the updated probabilities.
    """
    expansion = expand_routes(trips, net)
    route_sets: dict[str, RouteSet] = {}
    for plan in expansion.routes:
        cost = netmodel.route_cost(net, list(plan.edges), car_weight)
        route_sets[plan.trip_id] = RouteSet(
            trip_id=plan.trip_id,
            alternatives=[Alternative(plan.edges, cost, 1.0)],
        )
    departs = {p.trip_id: p.depart for p in expansion.routes}

    # keep assignment runs deterministic and rerouting-free
    sim_cfg = SimConfig(
        begin=config.begin,
        end=config.end,
        step_length=config.step_length,
        ignore_junction_blocker=config.ignore_junction_blocker,
        time_to_teleport=config.time_to_teleport,
        rerouting_probability=0.0,
        rerouting_period=config.rerouting_period,
        speed_smoothing=config.speed_smoothing,
        seed=config.seed,
    )

    smooth_cost: dict[str, float] = {
        e.id: netmodel.free_flow_time(e) for e in net.edges.values()
    }
    metrics: list[IterationMetrics] = []
    converged = False
    plans: list[RoutePlan] = []

    for iteration in range(max_iter):
        plans = [
            RoutePlan(
                trip_id,
                rs.alternatives[rs.chosen_index].route,
                departs[trip_id],
            )
            for trip_id, rs in sorted(route_sets.items())
        ]
        out = Simulation(net, plans, sim_cfg).run()
        metrics.append(
            IterationMetrics(
                iteration=iteration,
                avg_speed=out.totals["avg_speed"],
                time_loss=out.totals["avg_time_loss"],
                avg_travel_time=out.totals["avg_travel_time"],
            )
        )
        if convergence_check(metrics, tol, window):
            converged = True
            break
        if iteration == max_iter - 1:
            break

        for eid, t in out.edge_mean_time.items():
            smooth_cost[eid] = 0.5 * smooth_cost[eid] + 0.5 * t

        def est_weight(edge: netmodel.Edge) -> float:
            if edge.bus_only:
                return math.inf
            return smooth_cost[edge.id]

        choice_rng = random.Random(f"{config.seed}/assign/{iteration}")
        cache: dict[str, tuple[dict, dict]] = {}
        for trip_id in sorted(route_sets):
            rs = route_sets[trip_id]
            result = out.vehicles[trip_id]
            gawron_update(
                rs,
                _experienced_cost(result, rs.alternatives[rs.chosen_index].route, net),
                beta,
                alpha,
            )

            src = rs.alternatives[0].route[0]
            dst = rs.alternatives[0].route[-1]
            hit = cache.get(src)
            if hit is None:
                hit = netmodel.shortest_paths_from(net, src, est_weight)
                cache[src] = hit
            dist, pred = hit
            if dst in dist:
                candidate = tuple(netmodel.reconstruct_route(pred, src, dst))
                known = {a.route for a in rs.alternatives}
                if candidate not in known:
                    n = len(rs.alternatives) + 1
                    scale = (n - 1) / n
                    for a in rs.alternatives:
                        a.probability *= scale
                    rs.alternatives.append(
                        Alternative(candidate, dist[dst], 1.0 / n)
                    )
                    while len(rs.alternatives) > max_alternatives:
                        worst = max(
                            range(len(rs.alternatives)),
                            key=lambda i: (rs.alternatives[i].cost, i),
                        )
                        dropped = rs.alternatives.pop(worst)
                        remain = math.fsum(a.probability for a in rs.alternatives)
                        if remain > 0:
                            for a in rs.alternatives:
                                a.probability /= remain
                        else:
                            even = 1.0 / len(rs.alternatives)
                            for a in rs.alternatives:
                                a.probability = even

            weights = [a.probability for a in rs.alternatives]
            rs.chosen_index = choice_rng.choices(
                range(len(rs.alternatives)), weights=weights
            )[0]

    return DuaResult(
        route_sets=route_sets,
        metrics=metrics,
        converged=converged,
        final_plans=plans,
    )


def write_metrics_csv(metrics: list[IterationMetrics], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "avg_speed", "time_loss", "avg_travel_time"])
        for m in metrics:
            w.writerow([m.iteration, f"{m.avg_speed:.6f}", f"{m.time_loss:.6f}", f"{m.avg_travel_time:.6f}"])
