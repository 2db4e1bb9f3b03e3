"""Time-stepping simulation, cumulative metrics and policy verification.

``simulate`` runs a policy over an hourly residual-energy trace and
accumulates unserved / spilled energy, per-store level traces, energy
served externally and energy moved between stores.  ``greedify``
rewrites any feasible rate schedule into a greedy one that serves at
least as much energy up to every hour; ``verify_feasible`` and
``verify_greedy`` are the matching checkers.  ``lower_bound_unserved``
is the unbeatable floor set by total output power alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fleet import (
    SLACK,
    CapacityViolation,
    FleetError,
    FleetState,
    RateViolation,
    StepDecision,
    StoreSpec,
    full_state,
    imbalance,
    validate_fleet,
    validate_state,
)
from .policies import FleetConsts, Policy


# Threshold below which imbalance residue is treated as rounding dust
# rather than something greedify needs to act on.
_GREEDIFY_EPS = 1e-9


class OverdrawViolation(FleetError):
    """More energy drawn for charging than the surplus provides."""

    def __init__(self, message: str, time_index: int):
        super().__init__(message)
        self.time_index = time_index


class OverserveViolation(FleetError):
    """More energy discharged than the demand calls for."""

    def __init__(self, message: str, time_index: int):
        super().__init__(message)
        self.time_index = time_index


class NotGreedy(FleetError):
    """A step spills or leaves demand unserved without every store at its limit."""

    def __init__(self, message: str, time_index: int, store: int):
        super().__init__(message)
        self.time_index = time_index
        self.store = store


class InfeasibleInput(FleetError):
    """The rate schedule handed to greedify is not feasible."""


def trace_values(trace) -> np.ndarray:
    """Accept a ResidualTrace or any float sequence; return a 1-D array."""
    values = getattr(trace, "values_mw", trace)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise FleetError("residual-energy trace must be one-dimensional")
    return arr


@dataclass(frozen=True)
class PolicyTrace:
    """A full rate schedule: one row per hour, one column per store."""

    rates_mw: np.ndarray

    def __post_init__(self):
        arr = np.array(self.rates_mw, dtype=float)
        if arr.ndim != 2:
            raise FleetError("rates_mw must be a 2-D (hours x stores) array")
        object.__setattr__(self, "rates_mw", arr)

    @property
    def n_steps(self) -> int:
        return self.rates_mw.shape[0]

    @property
    def n_stores(self) -> int:
        return self.rates_mw.shape[1]


@dataclass(frozen=True)
class SimResult:
    """Everything a simulation run produced.

    unserved_cumulative_mwh / spill_cumulative_mwh are running totals
    after each hour; level_traces_mwh[t, i] is store i's level after hour
    t; served_external_mwh[i] is the total energy store i delivered to
    demand (cross-charged energy excluded, attributed pro rata when a
    store discharges into both demand and another store in one hour).
    """

    unserved_cumulative_mwh: np.ndarray
    spill_cumulative_mwh: np.ndarray
    level_traces_mwh: np.ndarray
    rates_mw: np.ndarray
    served_external_mwh: np.ndarray
    cross_charged_mwh: float
    final_state: FleetState

    @property
    def total_unserved_mwh(self) -> float:
        return float(self.unserved_cumulative_mwh[-1]) if len(self.unserved_cumulative_mwh) else 0.0

    @property
    def total_spill_mwh(self) -> float:
        return float(self.spill_cumulative_mwh[-1]) if len(self.spill_cumulative_mwh) else 0.0

    def policy_trace(self) -> PolicyTrace:
        return PolicyTrace(self.rates_mw)


def simulate(
    fleet: Sequence[StoreSpec],
    trace,
    policy: Policy | Callable[[FleetState, float, Sequence[StoreSpec]], StepDecision],
    initial: FleetState | None = None,
) -> SimResult:
    """Run a policy step by step over the trace.

    ``policy`` is a Policy or any callable with the same decide signature.
    ``initial`` defaults to all stores full.  Deterministic: identical
    inputs give bit-identical results.
    """
    validate_fleet(fleet)
    values = trace_values(trace)
    if len(values) == 0:
        raise FleetError("residual-energy trace is empty")
    state = initial if initial is not None else full_state(fleet)
    validate_state(state, fleet)

    consts = FleetConsts(fleet)
    if isinstance(policy, Policy):
        step = policy.raw_step(consts)
    else:
        hour = itertools.count(state.time_index)

        def step(levels, re):
            decision = policy(FleetState(tuple(levels), next(hour)), re, fleet)
            return list(decision.rates_mw), decision.spill_mwh, decision.unserved_mwh

    n = len(fleet)
    steps = len(values)
    vals = values.tolist()
    capacity = consts.capacity
    out_power = consts.out_power
    max_charge = consts.max_charge
    eta = consts.eta
    levels = list(state.levels_mwh)
    level_rows: list[list[float]] = []
    rate_rows: list[list[float]] = []
    unserved_cum = np.empty(steps)
    spill_cum = np.empty(steps)
    served = [0.0] * n
    cross = 0.0
    cum_unserved = 0.0
    cum_spill = 0.0

    for t in range(steps):
        re = vals[t]
        rates, spill, unserved = step(levels, re)
        for i in range(n):
            r = rates[i]
            if r < -out_power[i] - SLACK or r > max_charge[i] + SLACK:
                raise RateViolation(
                    f"hour {t}: store {i} rate {r} outside feasible range (policy bug)",
                    time_index=t,
                    store=i,
                )
            level = levels[i] + r
            if level < -SLACK or level > capacity[i] + SLACK:
                raise CapacityViolation(
                    f"hour {t}: store {i} level {level} outside [0, {capacity[i]}] (policy bug)",
                    time_index=t,
                    store=i,
                )
            levels[i] = min(max(level, 0.0), capacity[i])
        cum_unserved += unserved
        cum_spill += spill
        unserved_cum[t] = cum_unserved
        spill_cum[t] = cum_spill
        rate_rows.append(rates)
        level_rows.append(list(levels))

        if re < 0.0:
            # Store output splits between demand and cross-charge draw.
            output = 0.0
            draw = 0.0
            for i in range(n):
                r = rates[i]
                if r < 0.0:
                    output -= r
                elif r > 0.0:
                    draw += r / eta[i]
            if draw > 0.0:
                cross += draw
            served_total = output - draw
            if output > 0.0 and served_total > 0.0:
                share = served_total / output
                for i in range(n):
                    r = rates[i]
                    if r < 0.0:
                        served[i] -= r * share
        else:
            # Any discharge during a surplus hour feeds other stores.
            for i in range(n):
                r = rates[i]
                if r < 0.0:
                    cross -= r

    return SimResult(
        unserved_cumulative_mwh=unserved_cum,
        spill_cumulative_mwh=spill_cum,
        level_traces_mwh=np.asarray(level_rows),
        rates_mw=np.asarray(rate_rows),
        served_external_mwh=np.asarray(served),
        cross_charged_mwh=cross,
        final_state=FleetState(tuple(levels), state.time_index + steps),
    )


def lower_bound_unserved(trace, total_output_power_mw: float) -> np.ndarray:
    """Cumulative unserved energy no feasible policy can beat.

    Demand beyond the fleet's combined output power cannot be served no
    matter how much energy is stored, so sum(max(0, -re - P_total)) up to
    each hour bounds every policy's cumulative unserved energy from below.
    """
    if total_output_power_mw < 0.0:
        raise FleetError("total output power must be nonnegative")
    values = trace_values(trace)
    return np.cumsum(np.maximum(0.0, -values - total_output_power_mw))


def verify_feasible(
    fleet: Sequence[StoreSpec],
    initial: FleetState,
    trace,
    policy_trace: PolicyTrace,
) -> None:
    """Check every step of a rate schedule, raising on the first violation.

    Checks, within slack SLACK: rate bounds, level bounds along the
    induced trajectory, and the imbalance sign discipline (surplus hours
    may not draw more than the surplus; deficit hours may not discharge
    beyond the demand).
    """
    validate_fleet(fleet)
    validate_state(initial, fleet)
    values = trace_values(trace)
    rates = policy_trace.rates_mw
    if rates.shape[0] != len(values):
        raise FleetError(f"{rates.shape[0]} rate rows for {len(values)} trace hours")
    if rates.shape[1] != len(fleet):
        raise FleetError(f"{rates.shape[1]} rate columns for {len(fleet)} stores")

    etas = [s.efficiency for s in fleet]
    levels = list(initial.levels_mwh)
    for t in range(len(values)):
        re = float(values[t])
        row = rates[t]
        for i, spec in enumerate(fleet):
            r = row[i]
            if r < -spec.output_power_mw - SLACK or r > spec.efficiency * spec.input_power_mw + SLACK:
                raise RateViolation(
                    f"hour {t}: store {i} rate {r} outside "
                    f"[-{spec.output_power_mw}, {spec.efficiency * spec.input_power_mw}]",
                    time_index=t,
                    store=i,
                )
            level = levels[i] + r
            if level < -SLACK or level > spec.capacity_mwh + SLACK:
                raise CapacityViolation(
                    f"hour {t}: store {i} level {level} outside [0, {spec.capacity_mwh}]",
                    time_index=t,
                    store=i,
                )
            levels[i] = min(max(level, 0.0), spec.capacity_mwh)
        u = imbalance(re, row, etas)
        if re >= 0.0 and u < -SLACK:
            raise OverdrawViolation(
                f"hour {t}: drew {-u} MW more than the {re} MW surplus", time_index=t
            )
        if re <= 0.0 and u > SLACK:
            raise OverserveViolation(
                f"hour {t}: discharged {u} MW beyond the {-re} MW demand", time_index=t
            )


def verify_greedy(
    fleet: Sequence[StoreSpec],
    initial: FleetState,
    trace,
    policy_trace: PolicyTrace,
) -> None:
    """Check the greedy conditions at every step of a feasible schedule.

    Whenever a step spills, every store must be at its maximum charge
    rate; whenever a step leaves demand unserved, every store must be at
    its maximum discharge rate.  Raises NotGreedy with the offending hour
    and store.
    """
    values = trace_values(trace)
    rates = policy_trace.rates_mw
    etas = [s.efficiency for s in fleet]
    levels = list(initial.levels_mwh)
    for t in range(len(values)):
        re = float(values[t])
        row = rates[t]
        u = imbalance(re, row, etas)
        if re >= 0.0 and u > SLACK:
            for i, spec in enumerate(fleet):
                expected = spec.max_charge_rate_mw(levels[i])
                if row[i] < expected - SLACK:
                    raise NotGreedy(
                        f"hour {t}: spill {u} MWh but store {i} charges {row[i]} < {expected}",
                        time_index=t,
                        store=i,
                    )
        elif re < 0.0 and u < -SLACK:
            for i, spec in enumerate(fleet):
                expected = -spec.max_discharge_rate_mw(levels[i])
                if row[i] > expected + SLACK:
                    raise NotGreedy(
                        f"hour {t}: unserved {-u} MWh but store {i} rate {row[i]} > {expected}",
                        time_index=t,
                        store=i,
                    )
        for i, spec in enumerate(fleet):
            levels[i] = min(max(levels[i] + row[i], 0.0), spec.capacity_mwh)


def _raise_to_greedy_charge(levels: list[float], row, re: float, fleet: Sequence[StoreSpec]) -> None:
    """Raise charging rates at a surplus hour until greedy.

    Consumes the spilled surplus u >= 0 by raising rates toward
    min(headroom, eta * Q), cheapest bookkeeping first: raising a
    negative rate absorbs surplus one-for-one, raising a positive rate
    costs 1/eta of surplus per unit of rate.  Stops when u reaches zero
    or every store is at its maximum charge rate.
    """
    etas = [s.efficiency for s in fleet]
    u = imbalance(re, row, etas)
    for i, spec in enumerate(fleet):
        if u <= _GREEDIFY_EPS:
            break
        target = spec.max_charge_rate_mw(levels[i])
        r = row[i]
        if r < 0.0:
            step = min(min(target, 0.0) - r, u)
            if step > 0.0:
                r += step
                u -= step
        if u > _GREEDIFY_EPS and 0.0 <= r < target:
            step = min(target - r, u * spec.efficiency)
            if step > 0.0:
                r += step
                u -= step / spec.efficiency
        row[i] = r


def _lower_to_greedy_discharge(levels: list[float], row, re: float, fleet: Sequence[StoreSpec]) -> None:
    """Lower rates at a deficit hour until greedy.

    Raises served energy by lowering rates toward -min(level, P); the
    imbalance u <= 0 rises toward zero as rates fall.  Stops when u
    reaches zero (demand fully met) or every store is at its maximum
    discharge rate.
    """
    etas = [s.efficiency for s in fleet]
    budget = -imbalance(re, row, etas)  # unserved demand still to claw back
    for i, spec in enumerate(fleet):
        if budget <= _GREEDIFY_EPS:
            break
        target = -spec.max_discharge_rate_mw(levels[i])
        r = row[i]
        if r > 0.0:
            step = min(r - max(target, 0.0), budget * spec.efficiency)
            if step > 0.0:
                r -= step
                budget -= step / spec.efficiency
        if budget > _GREEDIFY_EPS and r <= 0.0 and r > target:
            step = min(r - target, budget)
            if step > 0.0:
                r -= step
                budget -= step
        row[i] = r


def greedify(
    fleet: Sequence[StoreSpec],
    initial: FleetState,
    trace,
    policy_trace: PolicyTrace,
) -> PolicyTrace:
    """Rewrite a feasible schedule to be greedy at every hour.

    Works forward through time.  At each hour the step is made greedy
    (charging raised at surplus hours, discharging deepened at deficit
    hours), then later hours are repaired against the shifted levels:
    after extra charging, later rates are capped at the remaining
    headroom; after extra discharging, later rates are floored at minus
    the remaining level.  Where a repair would break the imbalance sign
    at a later hour (possible when the original schedule cross-charges),
    the offending side is trimmed back to balance.  The result is
    feasible, greedy, and leaves no more demand unserved than the input
    at any hour.  O(steps^2) worst case; intended as an analysis tool,
    not a hot path.
    """
    values = trace_values(trace)
    try:
        verify_feasible(fleet, initial, trace, policy_trace)
    except FleetError as exc:
        raise InfeasibleInput(f"input schedule is not feasible: {exc}") from exc

    rates = policy_trace.rates_mw.copy()
    etas = [s.efficiency for s in fleet]
    n = len(fleet)
    steps = len(values)
    levels = list(initial.levels_mwh)

    for t in range(steps):
        re = float(values[t])
        row = rates[t]
        before = row.copy()
        if re >= 0.0:
            _raise_to_greedy_charge(levels, row, re, fleet)
        else:
            _lower_to_greedy_discharge(levels, row, re, fleet)
        changed = bool(np.any(row != before))

        levels = [min(max(levels[i] + row[i], 0.0), fleet[i].capacity_mwh) for i in range(n)]
        if changed:
            walk = list(levels)
            if re >= 0.0:
                _repair_after_extra_charge(fleet, etas, values, rates, walk, t + 1, steps)
            else:
                _repair_after_extra_discharge(fleet, etas, values, rates, walk, t + 1, steps)

    return PolicyTrace(rates)


def _repair_after_extra_charge(fleet, etas, values, rates, walk, start, steps):
    """Cap later rates at the remaining headroom of the now-fuller stores."""
    n = len(fleet)
    for t2 in range(start, steps):
        row = rates[t2]
        for i, spec in enumerate(fleet):
            headroom = max(spec.capacity_mwh - walk[i], 0.0)
            if row[i] > headroom:
                row[i] = headroom
        re2 = float(values[t2])
        if re2 < 0.0:
            # Trimmed charging may strand discharge output; pull discharges
            # back toward zero until the step no longer overserves.
            u = imbalance(re2, row, etas)
            if u > _GREEDIFY_EPS:
                excess = u
                for i in range(n):
                    if excess <= _GREEDIFY_EPS:
                        break
                    if row[i] < 0.0:
                        step = min(-row[i], excess)
                        row[i] += step
                        excess -= step
        for i, spec in enumerate(fleet):
            walk[i] = min(max(walk[i] + row[i], 0.0), spec.capacity_mwh)


def _repair_after_extra_discharge(fleet, etas, values, rates, walk, start, steps):
    """Floor later rates at minus the remaining level of the now-emptier stores."""
    n = len(fleet)
    for t2 in range(start, steps):
        row = rates[t2]
        for i in range(n):
            floor = -walk[i]
            if row[i] < floor:
                row[i] = floor
        re2 = float(values[t2])
        if re2 >= 0.0:
            # Weakened discharging may leave receivers drawing unbacked
            # energy; pull charging back toward zero until balanced.
            u = imbalance(re2, row, etas)
            if u < -_GREEDIFY_EPS:
                deficit = -u
                for i, spec in enumerate(fleet):
                    if deficit <= _GREEDIFY_EPS:
                        break
                    if row[i] > 0.0:
                        step = min(row[i], deficit * spec.efficiency)
                        row[i] -= step
                        deficit -= step / spec.efficiency
        for i, spec in enumerate(fleet):
            walk[i] = min(max(walk[i] + row[i], 0.0), spec.capacity_mwh)


def unserved_series(fleet: Sequence[StoreSpec], initial: FleetState, trace, policy_trace: PolicyTrace) -> np.ndarray:
    """Cumulative unserved energy of an explicit rate schedule."""
    values = trace_values(trace)
    etas = [s.efficiency for s in fleet]
    out = np.empty(len(values))
    total = 0.0
    for t in range(len(values)):
        u = imbalance(float(values[t]), policy_trace.rates_mw[t], etas)
        total += max(0.0, -u)
        out[t] = total
    return out


def write_simulation_csv(path, trace, fleet: Sequence[StoreSpec], result: SimResult) -> None:
    """Plot-ready per-hour dump of a simulation run."""
    values = trace_values(trace)
    names = [s.name for s in fleet]
    header = (
        ["hour", "re_mw"]
        + [f"rate_{n}" for n in names]
        + [f"level_{n}" for n in names]
        + ["spill_cum_mwh", "unserved_cum_mwh"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(len(values)):
            cells = [str(t), repr(float(values[t]))]
            cells += [repr(float(x)) for x in result.rates_mw[t]]
            cells += [repr(float(x)) for x in result.level_traces_mwh[t]]
            cells += [repr(float(result.spill_cumulative_mwh[t])), repr(float(result.unserved_cumulative_mwh[t]))]
            fh.write(",".join(cells) + "\n")
