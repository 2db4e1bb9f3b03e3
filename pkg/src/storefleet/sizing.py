"""Cost model, reliability checks and dimension optimisation.

Prices are quoted per kWh of capacity and per kW of power, applied to
dimensions expressed in the split-efficiency convention (the convention
storage cost tables use).  Internally all optimisation runs in
servable-energy terms and converts at the costing boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .engine import SimResult, simulate, trace_values
from .fleet import FleetState, LossConvention, StoreSpec
from .policies import Policy, ValueParams

HOURS_PER_YEAR = 8760.0

# Dollars per $bn and kWh (kW) per MWh (MW): applied once, at the costing
# boundary, so unit bugs cannot creep into the optimisation loops.
_KWH_PER_MWH = 1e3
_USD_PER_BN = 1e9


class Infeasible(Exception):
    """No dimension within the searched range meets the standard."""


@dataclass(frozen=True)
class StorePrices:
    """Unit prices for one technology (USD per kWh / kW)."""

    capacity_usd_per_kwh: float
    output_power_usd_per_kw: float
    input_power_usd_per_kw: float

    def __post_init__(self):
        if min(self.capacity_usd_per_kwh, self.output_power_usd_per_kw, self.input_power_usd_per_kw) < 0.0:
            raise ValueError("prices must be nonnegative")


@dataclass(frozen=True)
class StoreCost:
    """Cost breakdown for one store, USD."""

    capacity_usd: float
    output_power_usd: float
    input_power_usd: float

    @property
    def total_usd(self) -> float:
        return self.capacity_usd + self.output_power_usd + self.input_power_usd


@dataclass(frozen=True)
class CostBreakdown:
    per_store: tuple[StoreCost, ...]

    @property
    def total_usd(self) -> float:
        return sum(c.total_usd for c in self.per_store)


def fleet_cost(
    dims_split: Sequence[tuple[float, float, float]],
    prices: Sequence[StorePrices],
) -> CostBreakdown:
    """Price a fleet from (capacity_mwh, output_mw, input_mw) triples.

    Dimensions must already be in the split-efficiency convention the
    prices assume.
    """
    if len(dims_split) != len(prices):
        raise ValueError(f"{len(dims_split)} dimension triples for {len(prices)} price rows")
    per_store = []
    for (capacity_mwh, output_mw, input_mw), price in zip(dims_split, prices):
        per_store.append(
            StoreCost(
                capacity_usd=capacity_mwh * _KWH_PER_MWH * price.capacity_usd_per_kwh,
                output_power_usd=output_mw * _KWH_PER_MWH * price.output_power_usd_per_kw,
                input_power_usd=input_mw * _KWH_PER_MWH * price.input_power_usd_per_kw,
            )
        )
    return CostBreakdown(tuple(per_store))


@dataclass(frozen=True)
class ReliabilityStandard:
    """Maximum tolerated average unserved energy, GWh per year."""

    max_unserved_gwh_per_year: float

    def __post_init__(self):
        if self.max_unserved_gwh_per_year < 0.0:
            raise ValueError("reliability standard must be nonnegative")

    def allowance_mwh(self, years: float) -> float:
        return self.max_unserved_gwh_per_year * 1e3 * years


def check_reliability(result: SimResult, years: float, standard: ReliabilityStandard) -> bool:
    """True iff total unserved energy averaged per year meets the standard."""
    if years <= 0.0:
        raise ValueError("years must be positive")
    return result.total_unserved_mwh <= standard.allowance_mwh(years)


def _bisect_min(feasible, lo: float, hi: float, tol: float) -> float:
    """Smallest feasible value of a monotone predicate, to within tol.

    Assumes feasible(hi) is True and values below the returned one
    (beyond tol) are infeasible.  The returned point itself has been
    evaluated feasible.
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_single_store_capacity(
    trace, efficiency: float, tol_mwh: float = 1.0
) -> tuple[float, float]:
    """Smallest store (and then smallest initial fill) that serves everything.

    Power ratings are unconstrained; the store charges greedily.  Returns
    (capacity, initial_level) in servable-energy MWh such that the greedy
    trajectory never leaves demand unserved; the capacity search starts
    from a full store, then the initial level is minimised at that
    capacity.
    """
    values = trace_values(trace)
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {efficiency}")
    total_demand = float(np.sum(np.maximum(0.0, -values)))
    if total_demand <= 0.0:
        return 0.0, 0.0

    def feasible(capacity: float, initial: float) -> bool:
        level = initial
        for re in values:
            if re >= 0.0:
                level = min(level + efficiency * re, capacity)
            else:
                if level < -re - 1e-9:
                    return False
                level += re
        return True

    if not feasible(total_demand, total_demand):
        raise Infeasible("even a store holding the whole demand cannot serve it")
    e_min = _bisect_min(lambda e: feasible(e, e), 0.0, total_demand, tol_mwh)
    if feasible(e_min, 0.0):
        return e_min, 0.0
    s0_min = _bisect_min(lambda s0: feasible(e_min, s0), 0.0, e_min, tol_mwh)
    return e_min, s0_min


def _years(values: np.ndarray) -> float:
    return len(values) / HOURS_PER_YEAR


def _meets_standard(
    fleet: Sequence[StoreSpec],
    trace,
    lambdas: Sequence[float],
    standard: ReliabilityStandard,
    initial: FleetState | None = None,
) -> bool:
    result = simulate(fleet, trace, Policy.value(lambdas), initial=initial)
    return check_reliability(result, _years(trace_values(trace)), standard)


def min_required_output_power(
    trace,
    fleet_template: Sequence[StoreSpec],
    standard: ReliabilityStandard,
    lambdas: Sequence[float] | None = None,
    tol_mw: float = 100.0,
) -> float:
    """Smallest total output power meeting the standard.

    The template fixes each store's share of the total (output powers are
    scaled by a common factor); capacities and input powers should be set
    effectively unconstrained by the caller so that output power is the
    only binding resource.  Raises Infeasible if even output power equal
    to the peak demand cannot meet the standard.
    """
    values = trace_values(trace)
    if lambdas is None:
        lambdas = [0.0] * len(fleet_template)
    total_template = sum(s.output_power_mw for s in fleet_template)
    if not math.isfinite(total_template) or total_template <= 0.0:
        raise ValueError("template output powers must be finite and positive")
    weights = [s.output_power_mw / total_template for s in fleet_template]
    peak_demand = float(np.max(np.maximum(0.0, -values)))
    if peak_demand == 0.0:
        return 0.0

    def with_total(total_mw: float) -> list[StoreSpec]:
        floor = 1e-9  # output power must stay strictly positive
        return [
            replace(s, output_power_mw=max(w * total_mw, floor))
            for s, w in zip(fleet_template, weights)
        ]

    def feasible(total_mw: float) -> bool:
        return _meets_standard(with_total(total_mw), trace, lambdas, standard)

    if not feasible(peak_demand):
        raise Infeasible(
            f"standard unmet even with total output power {peak_demand} MW (the peak demand)"
        )
    if feasible(0.0):
        return 0.0
    return _bisect_min(feasible, 0.0, peak_demand, tol_mw)


@dataclass(frozen=True)
class SizingOptions:
    """Search-resolution knobs for the dimension optimisers.

    lambda_grid is either one flat tuple of candidate decay rates shared
    by every store, or one tuple per store position (long store first,
    then companions in candidate order).
    """

    q_grid_points: int = 32
    q_grid_lo_factor: float = 0.1  # times mean positive residual energy
    e_tol_mwh: float = 1.0
    p_tol_mw: float = 100.0
    # Output-power candidates explored above the feasible minimum when
    # companion stores are present (1 = pin at the minimum).  A single
    # store always pins: beyond its minimum, extra output power buys
    # nothing that capacity cannot.  With companions that logic fails:
    # a long store pinned at minimum power may need far more capacity to
    # keep the companion charged through droughts.
    p_grid_points: int = 1
    lambda_grid: tuple = (0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1)
    long_store_name: str = "long"


@dataclass(frozen=True)
class SizedStore:
    """One store's reported dimensions and cost."""

    name: str
    capacity_mwh: float
    output_power_mw: float
    input_power_mw: float
    efficiency: float
    cost: StoreCost


@dataclass(frozen=True)
class SizingResult:
    """Optimiser output: dimensions, costs and achieved reliability.

    Capacities are reported in ``convention`` (split by default, matching
    cost-table usage); costs are always computed from split dimensions.
    """

    stores: tuple[SizedStore, ...]
    total_cost_usd: float
    annual_unserved_gwh: float
    lambdas_per_hour: tuple[float, ...]
    convention: LossConvention
    served_external_mwh: tuple[float, ...]

    def store(self, name: str) -> SizedStore:
        for s in self.stores:
            if s.name == name:
                return s
        raise KeyError(name)


def _split_capacity(capacity_mwh: float, efficiency: float) -> float:
    return capacity_mwh * efficiency ** -0.5


def _q_grid(values: np.ndarray, options: SizingOptions) -> list[float]:
    positive = values[values > 0.0]
    if len(positive) == 0:
        return [1e-9]
    hi = float(np.max(positive))
    lo = max(options.q_grid_lo_factor * float(np.mean(positive)), 1e-9)
    if options.q_grid_points <= 1 or lo >= hi:
        return [hi]
    ratio = (hi / lo) ** (1.0 / (options.q_grid_points - 1))
    return [lo * ratio**k for k in range(options.q_grid_points)]


def _zero_result(names_prices, lambdas, convention) -> SizingResult:
    stores = tuple(
        SizedStore(name, 0.0, 0.0, 0.0, eta, StoreCost(0.0, 0.0, 0.0))
        for name, eta, _ in names_prices
    )
    return SizingResult(
        stores=stores,
        total_cost_usd=0.0,
        annual_unserved_gwh=0.0,
        lambdas_per_hour=tuple(lambdas),
        convention=convention,
        served_external_mwh=tuple(0.0 for _ in names_prices),
    )


def tune_lambdas(
    fleet: Sequence[StoreSpec],
    trace,
    lambda_grid: Sequence[float] | Sequence[Sequence[float]],
    initial: FleetState | None = None,
) -> ValueParams:
    """Exhaustive grid search for the decay rates minimising unserved energy.

    ``lambda_grid`` is either one list of candidate values shared by all
    stores or one list per store.  Ties go to the lexicographically
    smallest vector.
    """
    if len(lambda_grid) == 0:
        raise ValueError("lambda grid must be nonempty")
    first = lambda_grid[0]
    if isinstance(first, (int, float)):
        per_store = [sorted(float(x) for x in lambda_grid)] * len(fleet)
    else:
        if len(lambda_grid) != len(fleet):
            raise ValueError(f"{len(lambda_grid)} candidate lists for {len(fleet)} stores")
        per_store = [sorted(float(x) for x in g) for g in lambda_grid]
    best: tuple[float, ...] | None = None
    best_ue = math.inf
    for combo in itertools.product(*per_store):
        ue = simulate(fleet, trace, Policy.value(combo), initial=initial).total_unserved_mwh
        if ue < best_ue:
            best_ue = ue
            best = combo
    assert best is not None
    return ValueParams(best)


def _optimize_long_store(
    trace,
    prices: StorePrices,
    standard: ReliabilityStandard,
    efficiency: float,
    secondary: Sequence[StoreSpec],
    secondary_prices: Sequence[StorePrices],
    lambdas: Sequence[float],
    options: SizingOptions,
) -> SizingResult | None:
    """Size the flexible store against fixed companions; None if infeasible.

    Output power is pinned at its feasible minimum first, then for each
    input power on a geometric grid the capacity is bisected down to the
    smallest value meeting the standard; the cheapest corner wins.
    """
    values = trace_values(trace)
    years = _years(values)
    name = options.long_store_name

    total_demand = float(np.sum(np.maximum(0.0, -values)))
    capacity_big = max(total_demand, 1.0)
    input_big = max(float(np.max(values, initial=0.0)), 1.0)

    def build(capacity, output_mw, input_mw):
        long_store = StoreSpec(
            name=name,
            capacity_mwh=capacity,
            output_power_mw=output_mw,
            input_power_mw=input_mw,
            efficiency=efficiency,
        )
        return [long_store, *secondary]

    def feasible_long_power(long_p_mw):
        return _meets_standard(
            build(capacity_big, max(long_p_mw, 1e-9), input_big), trace, lambdas, standard
        )

    # The bracket must let the long store cover the peak alone: companion
    # stores can be empty at the worst hour, so their power is no
    # substitute for long-store power there.
    peak_demand = float(np.max(np.maximum(0.0, -values), initial=0.0))
    if not feasible_long_power(peak_demand):
        return None
    if feasible_long_power(0.0):
        p_min = 1e-9
    else:
        p_min = max(_bisect_min(feasible_long_power, 0.0, peak_demand, options.p_tol_mw), 1e-9)

    if secondary and options.p_grid_points > 1 and peak_demand > p_min:
        k = options.p_grid_points
        p_values = [p_min + (peak_demand - p_min) * j / (k - 1) for j in range(k)]
    else:
        p_values = [p_min]

    best: tuple[float, float, float] | None = None
    best_cost = math.inf
    for p_long in p_values:
        for q in _q_grid(values, options):
            def feasible_capacity(capacity):
                return _meets_standard(
                    build(max(capacity, 1e-9), p_long, q), trace, lambdas, standard
                )

            if not feasible_capacity(capacity_big):
                continue
            e_min = _bisect_min(feasible_capacity, 0.0, capacity_big, options.e_tol_mwh)
            dims = [(_split_capacity(e_min, efficiency), p_long, q)]
            dims += [
                (_split_capacity(s.capacity_mwh, s.efficiency), s.output_power_mw, s.input_power_mw)
                for s in secondary
            ]
            cost = fleet_cost(dims, [prices, *secondary_prices]).total_usd
            if cost < best_cost:
                best_cost = cost
                best = (e_min, p_long, q)
    if best is None:
        return None

    e_min, p_long, q = best
    final_fleet = build(max(e_min, 1e-9), p_long, q)
    result = simulate(final_fleet, trace, Policy.value(lambdas))
    dims = [
        (_split_capacity(s.capacity_mwh, s.efficiency), s.output_power_mw, s.input_power_mw)
        for s in final_fleet
    ]
    breakdown = fleet_cost(dims, [prices, *secondary_prices])
    stores = tuple(
        SizedStore(
            name=s.name,
            capacity_mwh=dim[0],
            output_power_mw=dim[1],
            input_power_mw=dim[2],
            efficiency=s.efficiency,
            cost=cost,
        )
        for s, dim, cost in zip(final_fleet, dims, breakdown.per_store)
    )
    return SizingResult(
        stores=stores,
        total_cost_usd=breakdown.total_usd,
        annual_unserved_gwh=result.total_unserved_mwh / years / 1e3,
        lambdas_per_hour=tuple(float(x) for x in lambdas),
        convention=LossConvention.SPLIT_SQRT,
        served_external_mwh=tuple(float(x) for x in result.served_external_mwh),
    )


def _lambda_combos(grid, n_stores: int):
    """Decay-rate candidates per store position, in lexicographic order.

    For a single store the decay rate cannot change any decision, so one
    representative combo suffices.
    """
    if len(grid) == 0:
        raise ValueError("lambda grid must be nonempty")
    if isinstance(grid[0], (int, float)):
        per_store = [tuple(sorted(float(x) for x in grid))] * n_stores
    else:
        if len(grid) < n_stores:
            raise ValueError(f"{len(grid)} per-store decay grids for {n_stores} stores")
        per_store = [tuple(sorted(float(x) for x in g)) for g in grid[:n_stores]]
    if n_stores == 1:
        return [(per_store[0][0],)]
    return list(itertools.product(*per_store))


def optimize_single_store(
    trace,
    prices: StorePrices,
    standard: ReliabilityStandard,
    efficiency: float,
    options: SizingOptions | None = None,
) -> SizingResult:
    """Cheapest single store meeting the standard.

    Output power is fixed at its feasible minimum (unserved energy is
    nonincreasing in every dimension, and output power is priced whatever
    its value, so no cheaper feasible output power exists); capacity is
    then minimised for each candidate input power and the cheapest
    (capacity, input power) pair wins.
    """
    options = options or SizingOptions()
    values = trace_values(trace)
    if float(np.sum(np.maximum(0.0, -values))) <= standard.allowance_mwh(_years(values)):
        return _zero_result([(options.long_store_name, efficiency, prices)], (0.0,),
                            LossConvention.SPLIT_SQRT)
    lambdas = _lambda_combos(options.lambda_grid, 1)[0]
    result = _optimize_long_store(
        trace, prices, standard, efficiency,
        secondary=(), secondary_prices=(), lambdas=lambdas, options=options,
    )
    if result is None:
        raise Infeasible("no single store on the search grid meets the standard")
    return result


def optimize_fleet(
    trace,
    costs: Mapping[str, StorePrices],
    standard: ReliabilityStandard,
    secondary_grid: Sequence[Sequence[StoreSpec]],
    efficiency_long: float,
    options: SizingOptions | None = None,
) -> SizingResult:
    """Cheapest (long store + fixed companions) configuration on a grid.

    Each grid entry fixes the dimensions of zero or more companion stores
    (servable-energy convention).  For every entry and every decay-rate
    combination on the grid, the long store is dimensioned as in
    ``optimize_single_store`` and the cheapest feasible configuration
    overall is returned.  Decay rates are searched on cost, not tuned on
    unserved energy alone: serving the fast cycles from an efficient
    companion shrinks the long store's capacity long before it shows up
    in unserved energy.  Prices are looked up by store name.  Raises
    Infeasible if nothing on the grid meets the standard.
    """
    options = options or SizingOptions()
    if len(secondary_grid) == 0:
        raise ValueError("secondary grid must be nonempty (use [()] for no companion store)")
    long_name = options.long_store_name
    if long_name not in costs:
        raise KeyError(f"no prices for long store {long_name!r}")
    values = trace_values(trace)
    if float(np.sum(np.maximum(0.0, -values))) <= standard.allowance_mwh(_years(values)):
        return _zero_result([(long_name, efficiency_long, costs[long_name])], (0.0,),
                            LossConvention.SPLIT_SQRT)

    best: SizingResult | None = None
    for secondary in secondary_grid:
        secondary = tuple(secondary)
        secondary_prices = []
        for s in secondary:
            if s.name not in costs:
                raise KeyError(f"no prices for store {s.name!r}")
            secondary_prices.append(costs[s.name])
        for lambdas in _lambda_combos(options.lambda_grid, 1 + len(secondary)):
            candidate = _optimize_long_store(
                trace, costs[long_name], standard, efficiency_long,
                secondary=secondary, secondary_prices=secondary_prices,
                lambdas=lambdas, options=options,
            )
            if candidate is not None and (
                best is None or candidate.total_cost_usd < best.total_cost_usd
            ):
                best = candidate
    if best is None:
        raise Infeasible("no configuration on the secondary grid meets the standard")
    return best


def sizing_result_to_dict(result: SizingResult, mode: str) -> dict:
    """JSON-ready report mirroring published dimension/cost tables."""
    stores = []
    for s in result.stores:
        stores.append(
            {
                "name": s.name,
                "efficiency": s.efficiency,
                "capacity_mwh": s.capacity_mwh,
                "capacity_twh": s.capacity_mwh / 1e6,
                "output_power_mw": s.output_power_mw,
                "output_power_gw": s.output_power_mw / 1e3,
                "input_power_mw": s.input_power_mw,
                "input_power_gw": s.input_power_mw / 1e3,
                "cost_capacity_bn_usd": s.cost.capacity_usd / _USD_PER_BN,
                "cost_output_power_bn_usd": s.cost.output_power_usd / _USD_PER_BN,
                "cost_input_power_bn_usd": s.cost.input_power_usd / _USD_PER_BN,
                "cost_total_bn_usd": s.cost.total_usd / _USD_PER_BN,
            }
        )
    return {
        "mode": mode,
        "convention": result.convention.value,
        "stores": stores,
        "total_cost_bn_usd": result.total_cost_usd / _USD_PER_BN,
        "total_cost_usd": result.total_cost_usd,
        "annual_unserved_gwh": result.annual_unserved_gwh,
        "lambdas_per_hour": list(result.lambdas_per_hour),
        "served_external_mwh": list(result.served_external_mwh),
    }
