"""Command-line front end: simulate, size, min-store-curve, tune, synth, stats.

Scenarios live in one JSON file with units spelled out in every field
name.  All outputs are plot-ready CSV or JSON written under --out;
identical configs produce byte-identical files.  Exit codes: 0 success,
1 configuration error, 2 runtime error (infeasible sizing, verification
failure, degenerate data).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine, sizing, traces
from .fleet import (
    FleetError,
    FleetState,
    LossConvention,
    StoreSpec,
    convert_convention,
    validate_spec,
)
from .policies import Policy
from .sizing import Infeasible, ReliabilityStandard, SizingOptions, StorePrices
from .traces import ResidualTrace, SynthParams, TraceError


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are config errors
        raise ConfigError(message)


@dataclass
class Scenario:
    """Parsed scenario file: trace source, fleet, policy, costs, standard."""

    raw: dict
    convention: LossConvention
    stores: list[StoreSpec]          # servable-energy convention
    initial_levels: list[float]      # servable-energy convention
    policy: Policy | None
    costs: dict[str, StorePrices]
    standard: ReliabilityStandard | None
    options: SizingOptions
    secondary_grid: list[tuple[StoreSpec, ...]]
    sizing_efficiency: float | None
    lambda_grid: list


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required field {key!r}")
    return mapping[key]


def _parse_store(entry: dict, convention: LossConvention) -> tuple[StoreSpec, float]:
    spec = StoreSpec(
        name=str(_require(entry, "name", "store")),
        capacity_mwh=float(_require(entry, "capacity_mwh", "store")),
        output_power_mw=float(_require(entry, "output_power_mw", "store")),
        input_power_mw=float(_require(entry, "input_power_mw", "store")),
        efficiency=float(_require(entry, "efficiency", "store")),
    )
    validate_spec(spec)
    level = entry.get("initial_level_mwh")
    level = spec.capacity_mwh if level is None else float(level)
    spec, level = convert_convention(spec, level, convention, LossConvention.INPUT_SIDE)
    return spec, level


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None

    convention = LossConvention.parse(raw.get("convention", "split"))
    stores, levels = [], []
    for entry in raw.get("stores", []):
        try:
            spec, level = _parse_store(entry, convention)
        except FleetError as exc:
            raise ConfigError(f"{path}: bad store entry: {exc}") from None
        stores.append(spec)
        levels.append(level)

    policy = None
    if "policy" in raw:
        p = raw["policy"]
        kind = _require(p, "kind", "policy")
        if kind == "value":
            policy = Policy.value(p.get("lambdas_per_hour", [0.0] * len(stores)))
        elif kind in ("ggddf", "grtef"):
            policy = Policy(kind)
        else:
            raise ConfigError(f"unknown policy kind {kind!r}")
        if policy.kind == "value" and len(policy.params.lambdas_per_hour) != len(stores):
            raise ConfigError(
                f"{len(policy.params.lambdas_per_hour)} decay rates for {len(stores)} stores"
            )

    costs = {}
    for name, entry in raw.get("costs", {}).items():
        try:
            costs[name] = StorePrices(
                capacity_usd_per_kwh=float(_require(entry, "capacity_usd_per_kwh", f"costs[{name}]")),
                output_power_usd_per_kw=float(_require(entry, "output_power_usd_per_kw", f"costs[{name}]")),
                input_power_usd_per_kw=float(_require(entry, "input_power_usd_per_kw", f"costs[{name}]")),
            )
        except ValueError as exc:
            raise ConfigError(f"costs[{name}]: {exc}") from None

    standard = None
    if "reliability" in raw:
        standard = ReliabilityStandard(
            float(_require(raw["reliability"], "max_unserved_gwh_per_year", "reliability"))
        )

    sizing_section = raw.get("sizing", {})
    option_fields = {}
    for key in (
        "q_grid_points",
        "q_grid_lo_factor",
        "e_tol_mwh",
        "p_tol_mw",
        "p_grid_points",
        "long_store_name",
    ):
        if key in sizing_section:
            option_fields[key] = sizing_section[key]
    if "lambda_grid" in sizing_section:
        grid = sizing_section["lambda_grid"]
        if grid and isinstance(grid[0], (int, float)):
            option_fields["lambda_grid"] = tuple(float(x) for x in grid)
        elif grid:
            option_fields["lambda_grid"] = tuple(
                tuple(float(x) for x in per_store) for per_store in grid
            )
    options = SizingOptions(**option_fields)

    secondary_grid = []
    for candidate in sizing_section.get("secondary_grid", []):
        specs = []
        for entry in candidate:
            try:
                spec, _ = _parse_store(entry, convention)
            except FleetError as exc:
                raise ConfigError(f"{path}: bad secondary store: {exc}") from None
            specs.append(spec)
        secondary_grid.append(tuple(specs))

    return Scenario(
        raw=raw,
        convention=convention,
        stores=stores,
        initial_levels=levels,
        policy=policy,
        costs=costs,
        standard=standard,
        options=options,
        secondary_grid=secondary_grid,
        sizing_efficiency=sizing_section.get("efficiency"),
        lambda_grid=sizing_section.get("lambda_grid", list(SizingOptions().lambda_grid)),
    )


def _demand_generation(scenario: Scenario, seed: int | None):
    """Demand and generation series, for sources that carry them."""
    source = scenario.raw.get("trace", {})
    if "synthetic" in source:
        entry = dict(source["synthetic"])
        if seed is not None:
            entry["seed"] = seed
        try:
            params = SynthParams(**entry)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic params: {exc}") from None
        return traces.synthesize(params)
    if "csv_path" in source:
        path = source["csv_path"]
        try:
            with open(path, encoding="utf-8") as fh:
                header = fh.readline().strip().split(",")
        except FileNotFoundError:
            raise ConfigError(f"trace file not found: {path}") from None
        if all(c in header for c in ("demand_mw", "wind_mw", "solar_mw")):
            rows = np.genfromtxt(path, delimiter=",", names=True)
            demand = np.atleast_1d(rows["demand_mw"])
            generation = np.atleast_1d(rows["wind_mw"]) + np.atleast_1d(rows["solar_mw"])
            return demand, generation
        return None
    return None


def build_trace(scenario: Scenario, seed: int | None = None) -> ResidualTrace:
    source = scenario.raw.get("trace")
    if not source:
        raise ConfigError("config has no trace section")
    overcapacity = scenario.raw.get("overcapacity")
    if "inline_mw" in source:
        return ResidualTrace.from_values(source["inline_mw"])
    if "synthetic" in source:
        demand, generation = _demand_generation(scenario, seed)
        return traces.scale_to_overcapacity(
            demand, generation, 0.0 if overcapacity is None else float(overcapacity)
        )
    if "csv_path" in source:
        pair = _demand_generation(scenario, seed)
        if pair is not None and overcapacity is not None:
            return traces.scale_to_overcapacity(pair[0], pair[1], float(overcapacity))
        try:
            return traces.load_csv(source["csv_path"])
        except FileNotFoundError:
            raise ConfigError(f"trace file not found: {source['csv_path']}") from None
    raise ConfigError(f"trace section {source} needs one of inline_mw / synthetic / csv_path")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(scenario: Scenario, out_dir: Path, args) -> int:
    if not scenario.stores:
        raise ConfigError("simulate needs at least one store")
    if scenario.policy is None:
        raise ConfigError("simulate needs a policy section")
    trace = build_trace(scenario, args.seed)
    initial = FleetState(tuple(scenario.initial_levels))
    result = engine.simulate(scenario.stores, trace, scenario.policy, initial=initial)
    engine.write_simulation_csv(out_dir / "simulation.csv", trace, scenario.stores, result)
    summary = {
        "hours": len(trace),
        "years": len(trace) / traces.HOURS_PER_YEAR,
        "total_unserved_mwh": result.total_unserved_mwh,
        "total_spill_mwh": result.total_spill_mwh,
        "cross_charged_mwh": result.cross_charged_mwh,
        "served_external_mwh": {
            s.name: float(x) for s, x in zip(scenario.stores, result.served_external_mwh)
        },
        "final_levels_mwh": {
            s.name: float(x) for s, x in zip(scenario.stores, result.final_state.levels_mwh)
        },
    }
    _write_json(out_dir / "summary.json", summary)
    return 0


def _fixed_cost_report(scenario: Scenario) -> dict:
    dims, prices, names = [], [], []
    for spec, level in zip(scenario.stores, scenario.initial_levels):
        if spec.name not in scenario.costs:
            raise ConfigError(f"no prices configured for store {spec.name!r}")
        split_spec, _ = convert_convention(spec, level, LossConvention.INPUT_SIDE, LossConvention.SPLIT_SQRT)
        dims.append((split_spec.capacity_mwh, spec.output_power_mw, spec.input_power_mw))
        prices.append(scenario.costs[spec.name])
        names.append(spec.name)
    breakdown = sizing.fleet_cost(dims, prices)
    stores = []
    for name, (capacity, out_p, in_p), cost, spec in zip(names, dims, breakdown.per_store, scenario.stores):
        stores.append(
            {
                "name": name,
                "efficiency": spec.efficiency,
                "capacity_mwh": capacity,
                "capacity_twh": capacity / 1e6,
                "output_power_mw": out_p,
                "output_power_gw": out_p / 1e3,
                "input_power_mw": in_p,
                "input_power_gw": in_p / 1e3,
                "cost_capacity_bn_usd": cost.capacity_usd / 1e9,
                "cost_output_power_bn_usd": cost.output_power_usd / 1e9,
                "cost_input_power_bn_usd": cost.input_power_usd / 1e9,
                "cost_total_bn_usd": cost.total_usd / 1e9,
            }
        )
    return {
        "mode": "fixed",
        "convention": "split",
        "stores": stores,
        "total_cost_bn_usd": breakdown.total_usd / 1e9,
        "total_cost_usd": breakdown.total_usd,
    }


def cmd_size(scenario: Scenario, out_dir: Path, args) -> int:
    if args.no_optimize:
        _write_json(out_dir / "sizing.json", _fixed_cost_report(scenario))
        return 0
    if scenario.standard is None:
        raise ConfigError("size needs a reliability section")
    trace = build_trace(scenario, args.seed)
    long_name = scenario.options.long_store_name
    if long_name not in scenario.costs:
        raise ConfigError(f"no prices configured for store {long_name!r}")
    efficiency = scenario.sizing_efficiency
    if efficiency is None:
        raise ConfigError("size needs sizing.efficiency")
    if args.mode == "single":
        result = sizing.optimize_single_store(
            trace, scenario.costs[long_name], scenario.standard, efficiency, scenario.options
        )
    else:
        grid = scenario.secondary_grid or [()]
        result = sizing.optimize_fleet(
            trace, scenario.costs, scenario.standard, grid, efficiency, scenario.options
        )
    report = sizing.sizing_result_to_dict(result, args.mode)
    if args.convention == "input":
        for entry, store in zip(report["stores"], result.stores):
            entry["capacity_mwh"] = store.capacity_mwh * store.efficiency**0.5
            entry["capacity_twh"] = entry["capacity_mwh"] / 1e6
        report["convention"] = "input"
    _write_json(out_dir / "sizing.json", report)
    return 0


def _curve_point(payload):
    demand, generation, oc, eta, tol = payload
    if demand is None:
        trace = generation  # pre-built residual values
    else:
        trace = traces.scale_to_overcapacity(demand, generation, oc)
    return sizing.min_single_store_capacity(trace, eta, tol_mwh=tol)


def cmd_min_store_curve(scenario: Scenario, out_dir: Path, args) -> int:
    etas = [float(x) for x in args.etas.split(",") if x.strip()]
    if not etas:
        raise ConfigError("--etas must list at least one efficiency")
    oc_list = [float(x) for x in args.oc_list.split(",") if x.strip()] if args.oc_list else []
    tol = scenario.options.e_tol_mwh

    jobs = []
    if oc_list:
        pair = _demand_generation(scenario, args.seed)
        if pair is None:
            raise ConfigError("overcapacity sweeps need a synthetic or demand/wind/solar trace source")
        demand, generation = pair
        for oc in oc_list:
            for eta in etas:
                jobs.append((demand, generation, oc, eta, tol))
    else:
        trace = build_trace(scenario, args.seed)
        for eta in etas:
            jobs.append((None, trace, None, eta, tol))

    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_curve_point, jobs))
    else:
        results = [_curve_point(job) for job in jobs]

    rows = []
    for (demand, _, oc, eta, _), (e_min, s0_min) in zip(jobs, results):
        factor = eta**-0.5 if args.convention == "split" else 1.0
        rows.append((oc, eta, e_min * factor, s0_min * factor))

    slack = 2.0 * tol
    by_eta: dict[float, list] = {}
    by_oc: dict[float, list] = {}
    for oc, eta, e_min, s0 in rows:
        if oc is not None:
            by_eta.setdefault(eta, []).append((oc, e_min))
            by_oc.setdefault(oc, []).append((eta, e_min))
    for eta, series in by_eta.items():
        series.sort()
        for (_, a), (_, b) in zip(series, series[1:]):
            if b > a + slack:
                raise FleetError(f"capacity not monotone in overcapacity at efficiency {eta}")
    for oc, series in by_oc.items():
        series.sort()
        for (_, a), (_, b) in zip(series, series[1:]):
            if b > a + slack:
                raise FleetError(f"capacity not monotone in efficiency at overcapacity {oc}")

    with open(out_dir / "min_store_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("overcapacity,efficiency,e_min_mwh,s0_min_mwh\n")
        for oc, eta, e_min, s0 in rows:
            oc_cell = "" if oc is None else repr(oc)
            fh.write(f"{oc_cell},{eta!r},{e_min!r},{s0!r}\n")
    return 0


def cmd_tune(scenario: Scenario, out_dir: Path, args) -> int:
    if not scenario.stores:
        raise ConfigError("tune needs at least one store")
    trace = build_trace(scenario, args.seed)
    initial = FleetState(tuple(scenario.initial_levels))
    params = sizing.tune_lambdas(scenario.stores, trace, scenario.lambda_grid, initial=initial)
    result = engine.simulate(scenario.stores, trace, Policy("value", params), initial=initial)
    _write_json(
        out_dir / "lambdas.json",
        {
            "lambdas_per_hour": list(params.lambdas_per_hour),
            "total_unserved_mwh": result.total_unserved_mwh,
        },
    )
    return 0


def cmd_synth(scenario: Scenario, out_dir: Path, args) -> int:
    source = scenario.raw.get("trace", {})
    if "synthetic" not in source:
        raise ConfigError("synth needs a trace.synthetic section")
    trace = build_trace(scenario, args.seed)
    traces.write_csv(trace, out_dir / "trace.csv")
    entry = dict(source["synthetic"])
    if args.seed is not None:
        entry["seed"] = args.seed
    _write_json(
        out_dir / "trace_meta.json",
        {
            "synthetic": entry,
            "overcapacity": scenario.raw.get("overcapacity"),
            "hours": len(trace),
            "mean_residual_mw": float(np.mean(trace.values_mw)),
            "note": "synthetic stand-in series, not observed data",
        },
    )
    return 0


def cmd_stats(scenario: Scenario, out_dir: Path, args) -> int:
    trace = build_trace(scenario, args.seed)
    lags = range(0, min(args.max_lag + 1, len(trace)))
    stats = traces.trace_stats(trace, bins=args.bins, lags=lags)
    traces.write_stats_csv(stats, out_dir / "histogram.csv", out_dir / "acf.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="storefleet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="override the synthetic-trace seed")
        p.add_argument("--threads", type=int, default=1, help="parallel workers for sweeps")
        p.add_argument(
            "--convention",
            choices=("input", "split"),
            default="split",
            help="convention for reported capacities",
        )

    common(sub.add_parser("simulate", help="run a policy over a trace"))
    p_size = sub.add_parser("size", help="optimise store dimensions against a standard")
    common(p_size)
    p_size.add_argument("--mode", choices=("single", "fleet"), default="single")
    p_size.add_argument(
        "--no-optimize", action="store_true", help="cost the configured dimensions as-is"
    )
    p_curve = sub.add_parser("min-store-curve", help="minimal store size vs overcapacity")
    common(p_curve)
    p_curve.add_argument("--etas", required=True, help="comma-separated efficiencies")
    p_curve.add_argument("--oc-list", default="", help="comma-separated overcapacity fractions")
    common(sub.add_parser("tune", help="grid-search decay rates"))
    common(sub.add_parser("synth", help="generate and save a synthetic residual trace"))
    p_stats = sub.add_parser("stats", help="histogram and autocorrelation of a trace")
    common(p_stats)
    p_stats.add_argument("--bins", type=int, default=100)
    p_stats.add_argument("--max-lag", type=int, default=500)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "size": cmd_size,
    "min-store-curve": cmd_min_store_curve,
    "tune": cmd_tune,
    "synth": cmd_synth,
    "stats": cmd_stats,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        scenario = load_scenario(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"storefleet: config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](scenario, out_dir, args)
    except ConfigError as exc:
        print(f"storefleet: config error: {exc}", file=sys.stderr)
        return 1
    except (Infeasible, FleetError, TraceError) as exc:
        print(f"storefleet: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
