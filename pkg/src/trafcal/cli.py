"""Command-line pipeline driver.

One executable, eight subcommands: validate a network, generate demand,
run a simulation, iterate to user equilibrium, sweep the rerouting
probability, ingest measurements, emit a validation report, and write the
bundled fixtures. Every run takes its inputs from an optional project
config file plus flags (flags win) and logs with the active seed so runs
can be reproduced exactly.

Exit codes: 0 success, 1 validation violations, 2 usage error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import sys

from trafcal import calibrate, dataio, demandgen, equilibrium, fixtures, netmodel
from trafcal.microsim import (
    SimConfig,
    load_bus_lines,
    load_detectors,
    load_route_plans,
    run_simulation,
    save_bus_lines,
    save_detectors,
    save_route_plans,
    write_detector_csv,
    write_running_csv,
)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_SIM_KEYS = (
    "begin", "end", "step_length", "ignore_junction_blocker",
    "time_to_teleport", "rerouting_probability", "rerouting_period",
    "speed_smoothing", "seed",
)
_SWEEP_KEYS = ("p_min", "p_max", "step")
_EQ_KEYS = ("max_iter", "tol", "window", "beta", "alpha", "max_alternatives")
_PATH_KEYS = (
    "network", "statistics", "trips", "routes", "detectors", "bus_lines",
    "measurements", "output_dir",
)


class UsageError(Exception):
    pass


@dataclasses.dataclass
class ProjectConfig:
    seed: int = 0
    workers: int = 1
    paths: dict = dataclasses.field(default_factory=dict)
    sim: dict = dataclasses.field(default_factory=dict)
    demand: dict = dataclasses.field(default_factory=dict)
    sweep: dict = dataclasses.field(default_factory=dict)
    equilibrium: dict = dataclasses.field(default_factory=dict)


def load_project(path) -> ProjectConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: project config must be an object")
    known = {"seed", "workers", "paths", "sim", "demand", "sweep", "equilibrium"}
    unknown = set(doc) - known
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    cfg = ProjectConfig(
        seed=int(doc.get("seed", 0)),
        workers=int(doc.get("workers", 1)),
        paths=dict(doc.get("paths", {})),
        sim=dict(doc.get("sim", {})),
        demand=dict(doc.get("demand", {})),
        sweep=dict(doc.get("sweep", {})),
        equilibrium=dict(doc.get("equilibrium", {})),
    )
    for key in cfg.paths:
        if key not in _PATH_KEYS:
            raise UsageError(f"{path}: unknown path key '{key}'")
    for sub, keys in (("sim", _SIM_KEYS), ("sweep", _SWEEP_KEYS), ("equilibrium", _EQ_KEYS)):
        bad = set(getattr(cfg, sub)) - set(keys)
        if bad:
            raise UsageError(f"{path}: unknown {sub} keys {sorted(bad)}")
    # relative paths are taken relative to the config file's directory
    base = os.path.dirname(os.path.abspath(path))
    cfg.paths = {
        k: v if os.path.isabs(v) else os.path.join(base, v)
        for k, v in cfg.paths.items()
    }
    return cfg


class _Ctx:
    """Resolved invocation: config file values overlaid with flags."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = load_project(args.config) if args.config else ProjectConfig()
        self.seed = args.seed if args.seed is not None else self.cfg.seed
        workers = getattr(args, "workers", None)
        self.workers = workers if workers is not None else self.cfg.workers
        out = args.output_dir or self.cfg.paths.get("output_dir")
        self.output_dir = out or "."

    def log(self, msg: str) -> None:
        print(f"[seed {self.seed}] {msg}", file=sys.stderr)

    def path(self, key: str, flag_value, required: bool = True):
        value = flag_value or self.cfg.paths.get(key)
        if value is None and required:
            raise UsageError(
                f"missing --{key.replace('_', '-')} (not given and not in config)"
            )
        return value

    def out_path(self, name: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.normpath(os.path.join(self.output_dir, name))

    def sim_config(self) -> SimConfig:
        merged = dict(self.cfg.sim)
        for key in _SIM_KEYS:
            flag = getattr(self.args, key, None)
            if flag is not None:
                merged[key] = flag
        merged["seed"] = int(merged.get("seed", self.seed))
        if self.args.seed is not None:
            merged["seed"] = self.args.seed
        try:
            return SimConfig(**merged)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad simulation settings: {exc}") from exc

    def sweep_grid(self) -> calibrate.GridSpec:
        merged = dict(self.cfg.sweep)
        for key in _SWEEP_KEYS:
            flag = getattr(self.args, key, None)
            if flag is not None:
                merged[key] = flag
        try:
            return calibrate.GridSpec(**merged)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad sweep grid: {exc}") from exc

    def equilibrium_params(self) -> dict:
        merged = dict(self.cfg.equilibrium)
        for key in _EQ_KEYS:
            flag = getattr(self.args, key, None)
            if flag is not None:
                merged[key] = flag
        return merged


def _load_net(ctx: _Ctx, flag_value) -> netmodel.RoadNetwork:
    return netmodel.load_network(ctx.path("network", flag_value))


def _load_optional_lines(ctx: _Ctx, flag_value):
    path = ctx.path("bus_lines", flag_value, required=False)
    return load_bus_lines(path) if path else []


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_net_validate(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    violations = netmodel.validate_network(net)
    ctx.log(f"checked {len(net.edges)} edges, {len(net.junctions)} junctions")
    print(f"{len(violations)} violations")
    for v in violations:
        print(f"{v.code} {v.subject_id}: {v.message}")
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_demand_generate(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    stats, gates, schools, config = demandgen.load_statistics(
        ctx.path("statistics", ctx.args.statistics)
    )
    overrides = dict(ctx.cfg.demand)
    if ctx.args.seed is not None or "seed" not in overrides:
        overrides["seed"] = ctx.seed
    config = dataclasses.replace(config, **overrides)
    table = demandgen.generate_trips(stats, gates, schools, config, net)
    expanded = demandgen.expand_routes(table, net)
    trips_path = ctx.out_path("trips.json")
    routes_path = ctx.out_path("routes.json")
    demandgen.write_trips(table, trips_path)
    save_route_plans(expanded.routes, routes_path)
    ctx.log(f"generated {len(table)} trips -> {trips_path}")
    ctx.log(f"expanded {len(expanded.routes)} routes -> {routes_path}")
    if expanded.no_path:
        ctx.log(f"{len(expanded.no_path)} trips had no route and were left out")
    print(f"{len(table)} trips, {len(expanded.routes)} routed")
    return EXIT_OK


def cmd_sim_run(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    plans = load_route_plans(ctx.path("routes", ctx.args.routes), net)
    det_path = ctx.path("detectors", ctx.args.detectors, required=False)
    detectors = load_detectors(det_path, net) if det_path else []
    lines = _load_optional_lines(ctx, ctx.args.bus_lines)
    config = ctx.sim_config()
    ctx.log(
        f"simulating {len(plans)} vehicles, p={config.rerouting_probability}"
    )
    out = run_simulation(net, plans, config, detectors, lines)
    if detectors:
        write_detector_csv(
            out.detector_counts, out.detector_window, out.begin,
            ctx.out_path("detector_counts.csv"),
        )
    write_running_csv(out.running, ctx.out_path("running.csv"))
    with open(ctx.out_path("sim_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(out.totals, fh, indent=1, sort_keys=True)
        fh.write("\n")
    ctx.log(f"outputs in {ctx.output_dir}")
    print(
        f"arrived {int(out.totals['arrived'])}/{int(out.totals['departed'])}"
        f" avg_travel_time {out.avg_travel_time:.1f}s"
    )
    return EXIT_OK


def cmd_dua_iterate(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    table = demandgen.read_trips(ctx.path("trips", ctx.args.trips))
    config = ctx.sim_config()
    params = ctx.equilibrium_params()
    ctx.log(f"assignment over {len(table)} trips, params {params}")
    result = equilibrium.dua_iterate(net, table, config, **params)
    routes_path = ctx.out_path("dua_routes.json")
    save_route_plans(result.final_plans, routes_path)
    equilibrium.write_metrics_csv(result.metrics, ctx.out_path("dua_metrics.csv"))
    last = result.metrics[-1]
    ctx.log(
        f"{'converged' if result.converged else 'stopped'} after "
        f"{len(result.metrics)} iterations -> {routes_path}"
    )
    print(
        f"iterations {len(result.metrics)} converged {result.converged}"
        f" avg_travel_time {last.avg_travel_time:.1f}s"
    )
    return EXIT_OK


def cmd_calib_sweep(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    plans = load_route_plans(ctx.path("routes", ctx.args.routes), net)
    detectors = load_detectors(ctx.path("detectors", ctx.args.detectors), net)
    lines = _load_optional_lines(ctx, ctx.args.bus_lines)
    records = dataio.read_measurements_csv(
        ctx.path("measurements", ctx.args.measurements)
    )
    real = dataio.ingest(records).series
    grid = ctx.sweep_grid()
    config = ctx.sim_config()
    ctx.log(
        f"sweeping p over [{grid.p_min}, {grid.p_max}] step {grid.step}"
        f" with {ctx.workers} workers"
    )
    result = calibrate.sweep_rerouting_probability(
        net, plans, detectors, real, grid,
        seed=config.seed, base_config=config, bus_lines=lines,
        workers=ctx.workers,
    )
    calibrate.write_sweep_csv(result, ctx.out_path("sweep.csv"))
    calibrate.write_sweep_best(result, ctx.out_path("sweep_best.csv"))
    ctx.log(f"swept {len(result.entries)} points -> {ctx.out_path('sweep.csv')}")
    print(f"best_p {result.best_p:.2f} best_nrmse {result.best_nrmse:.6f}")
    return EXIT_OK


def _parse_date(text: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError as exc:
        raise UsageError(f"bad date '{text}': {exc}") from exc


def _ingestion_filter(args: argparse.Namespace) -> dataio.IngestionFilter:
    kwargs = {}
    if args.include_weekdays:
        days = set()
        for name in args.include_weekdays.split(","):
            if name.strip() not in dataio.WEEKDAY_NAMES:
                raise UsageError(f"unknown weekday '{name.strip()}'")
            days.add(dataio.WEEKDAY_NAMES[name.strip()])
        kwargs["include_weekdays"] = frozenset(days)
    if args.exclude_dates:
        kwargs["exclude_dates"] = frozenset(
            _parse_date(d.strip()) for d in args.exclude_dates.split(",")
        )
    if args.date_from or args.date_to:
        if not (args.date_from and args.date_to):
            raise UsageError("--date-from and --date-to must be given together")
        kwargs["date_range"] = (_parse_date(args.date_from), _parse_date(args.date_to))
    return dataio.IngestionFilter(**kwargs)


def cmd_data_ingest(ctx: _Ctx) -> int:
    records = dataio.read_measurements_csv(
        ctx.path("measurements", ctx.args.measurements)
    )
    filt = _ingestion_filter(ctx.args)
    result = dataio.ingest(records, filt)
    series_path = ctx.out_path("real_series.csv")
    dataio.series_to_csv(result.series, 0.0, series_path)
    with open(ctx.out_path("ingest_summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"days_used": result.days_used}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    ctx.log(f"{len(records)} records -> {len(result.series)} series ({series_path})")
    print(
        f"{len(result.series)} detectors, days used "
        + ", ".join(f"{k}={v}" for k, v in sorted(result.days_used.items()))
    )
    return EXIT_OK


def cmd_report_validate(ctx: _Ctx) -> int:
    net = _load_net(ctx, ctx.args.network)
    plans = load_route_plans(ctx.path("routes", ctx.args.routes), net)
    detectors = load_detectors(ctx.path("detectors", ctx.args.detectors), net)
    lines = _load_optional_lines(ctx, ctx.args.bus_lines)
    records = dataio.read_measurements_csv(
        ctx.path("measurements", ctx.args.measurements)
    )
    real = dataio.ingest(records).series

    p = ctx.args.p
    if p is None:
        best_path = os.path.join(ctx.output_dir, "sweep_best.csv")
        if not os.path.exists(best_path):
            raise UsageError("--p not given and no sweep_best.csv in output dir")
        p = calibrate.read_sweep_best(best_path)[0]
    config = dataclasses.replace(ctx.sim_config(), rerouting_probability=p)
    ctx.log(f"validation run at p={p}")
    out = run_simulation(net, plans, config, detectors, lines)
    report = dataio.validate(real, calibrate.sim_series(out))
    dataio.write_report(
        report,
        ctx.out_path("report.json"),
        ctx.out_path("per_window.csv"),
        ctx.out_path("per_detector.csv"),
    )
    ctx.log(f"report in {ctx.output_dir}")
    print(
        f"scenario_nrmse {report.scenario_nrmse:.6f}"
        f" best {report.best_detector} worst {report.worst_detector}"
    )
    return EXIT_OK


def cmd_fixture_make(ctx: _Ctx) -> int:
    seed = ctx.seed
    scenario = fixtures.twin_scenario(seed)
    out = ctx.out_path  # ensures the directory exists

    grid_path = out("grid.net.json")
    netmodel.save_network(fixtures.grid_network(), grid_path)
    net_path = out("twin_network.json")
    netmodel.save_network(scenario.net, net_path)
    stats_path = out("statistics.json")
    demandgen.save_statistics(
        scenario.districts, scenario.gates, scenario.schools,
        scenario.demand_config, stats_path,
    )
    det_path = out("detectors.json")
    save_detectors(scenario.detectors, det_path)
    lines_path = out("bus_lines.json")
    save_bus_lines(scenario.bus_lines, lines_path)
    ctx.log(f"grid and twin inputs in {ctx.output_dir}")

    eq_params = dict(ctx.cfg.equilibrium) or {"max_iter": 6, "tol": 0.05, "window": 3}
    sim_kwargs = dict(ctx.cfg.sim)
    sim_kwargs["seed"] = seed
    sim_cfg = SimConfig(**sim_kwargs)

    # ground truth: the exact pipeline a user will run, ending in one
    # simulation at the hidden true rerouting probability
    table = demandgen.generate_trips(
        scenario.districts, scenario.gates, scenario.schools,
        scenario.demand_config, scenario.net,
    )
    ctx.log(f"twin demand: {len(table)} trips")
    dua = equilibrium.dua_iterate(scenario.net, table, sim_cfg, **eq_params)
    truth_cfg = dataclasses.replace(
        sim_cfg, rerouting_probability=scenario.true_p
    )
    truth = run_simulation(
        scenario.net, dua.final_plans, truth_cfg,
        scenario.detectors, scenario.bus_lines,
    )
    records = []
    for det_id, counts in sorted(truth.detector_counts.items()):
        for date in fixtures.TWIN_DATES:
            for i, count in enumerate(counts):
                records.append(
                    dataio.RawMeasurement(det_id, date, i * dataio.WINDOW_S, count)
                )
    meas_path = out("measurements.csv")
    dataio.write_measurements_csv(records, meas_path)
    ctx.log(f"ground truth at p={scenario.true_p} -> {meas_path}")

    project = {
        "seed": seed,
        "workers": ctx.workers,
        "paths": {
            "network": "twin_network.json",
            "statistics": "statistics.json",
            "trips": "trips.json",
            "routes": "dua_routes.json",
            "detectors": "detectors.json",
            "bus_lines": "bus_lines.json",
            "measurements": "measurements.csv",
            "output_dir": ".",
        },
        "sim": dict(ctx.cfg.sim),
        "sweep": dict(ctx.cfg.sweep) or {"p_min": 0.0, "p_max": 1.0, "step": 0.05},
        "equilibrium": eq_params,
    }
    with open(out("project.json"), "w", encoding="utf-8") as fh:
        json.dump(project, fh, indent=1)
        fh.write("\n")
    print(f"fixtures written to {ctx.output_dir} (true p = {scenario.true_p})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="project config JSON")
    sub.add_argument("--seed", type=int, help="override the run seed")
    sub.add_argument("--output-dir", help="directory for output files")


def _add_sim_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--begin", type=float)
    sub.add_argument("--end", type=float)
    sub.add_argument("--step-length", dest="step_length", type=float)
    sub.add_argument("--time-to-teleport", dest="time_to_teleport", type=float)
    sub.add_argument(
        "--ignore-junction-blocker", dest="ignore_junction_blocker", type=float
    )
    sub.add_argument(
        "--rerouting-probability", dest="rerouting_probability", type=float
    )
    sub.add_argument("--rerouting-period", dest="rerouting_period", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafcal",
        description="microscopic traffic simulation and scenario calibration",
    )
    top = parser.add_subparsers(dest="group", required=True)

    net = top.add_parser("net", help="network tools").add_subparsers(
        dest="action", required=True
    )
    p = net.add_parser("validate", help="check a network file")
    _add_common(p)
    p.add_argument("--network")
    p.set_defaults(handler=cmd_net_validate)

    demand = top.add_parser("demand", help="demand generation").add_subparsers(
        dest="action", required=True
    )
    p = demand.add_parser("generate", help="trips and free-flow routes")
    _add_common(p)
    p.add_argument("--network")
    p.add_argument("--statistics")
    p.set_defaults(handler=cmd_demand_generate)

    sim = top.add_parser("sim", help="simulation").add_subparsers(
        dest="action", required=True
    )
    p = sim.add_parser("run", help="run one simulation")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--network")
    p.add_argument("--routes")
    p.add_argument("--detectors")
    p.add_argument("--bus-lines", dest="bus_lines")
    p.set_defaults(handler=cmd_sim_run)

    dua = top.add_parser("dua", help="user equilibrium").add_subparsers(
        dest="action", required=True
    )
    p = dua.add_parser("iterate", help="iterate assignment to equilibrium")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--network")
    p.add_argument("--trips")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--window", type=int)
    p.set_defaults(handler=cmd_dua_iterate)

    calib = top.add_parser("calib", help="calibration").add_subparsers(
        dest="action", required=True
    )
    p = calib.add_parser("sweep", help="grid sweep of the rerouting probability")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--network")
    p.add_argument("--routes")
    p.add_argument("--detectors")
    p.add_argument("--bus-lines", dest="bus_lines")
    p.add_argument("--measurements")
    p.add_argument("--p-min", dest="p_min", type=float)
    p.add_argument("--p-max", dest="p_max", type=float)
    p.add_argument("--grid-step", dest="step", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=cmd_calib_sweep)

    data = top.add_parser("data", help="measurement data").add_subparsers(
        dest="action", required=True
    )
    p = data.add_parser("ingest", help="average raw counts into daily series")
    _add_common(p)
    p.add_argument("--measurements")
    p.add_argument("--include-weekdays", help="comma list, e.g. Tue,Wed,Thu")
    p.add_argument("--exclude-dates", help="comma list of ISO dates")
    p.add_argument("--date-from", dest="date_from")
    p.add_argument("--date-to", dest="date_to")
    p.set_defaults(handler=cmd_data_ingest)

    report = top.add_parser("report", help="validation reports").add_subparsers(
        dest="action", required=True
    )
    p = report.add_parser("validate", help="score a simulation against data")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--network")
    p.add_argument("--routes")
    p.add_argument("--detectors")
    p.add_argument("--bus-lines", dest="bus_lines")
    p.add_argument("--measurements")
    p.add_argument("--p", type=float, help="rerouting probability to validate")
    p.set_defaults(handler=cmd_report_validate)

    fixture = top.add_parser("fixture", help="bundled scenarios").add_subparsers(
        dest="action", required=True
    )
    p = fixture.add_parser("make", help="write the grid and twin fixtures")
    _add_common(p)
    p.set_defaults(handler=cmd_fixture_make)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        ctx = _Ctx(args)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(ctx)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - boundary: report, do not crash
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())
