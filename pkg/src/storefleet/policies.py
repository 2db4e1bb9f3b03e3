"""Non-anticipatory scheduling policies.

Each scheduler maps the current store levels and this hour's residual
energy (generation minus demand, MW) to a StepDecision.  All three are
greedy: whenever energy would otherwise spill every store charges as hard
as it can, and whenever demand would otherwise go unserved every store
discharges as hard as it can.

* ``schedule_value_lp`` ranks stores by marginal-value derivatives
  v = exp(-lambda * level / output_power) and, after the external
  allocation, moves energy between stores (cross-charging) while that is
  worth the round-trip loss.  With the imbalance pinned at its greedy
  minimum, the step objective sum(v[i] * rate[i]) is maximised exactly.
* ``schedule_ggddf`` discharges stores with the greatest residual
  discharge duration (level / output_power) first; no cross-charging.
* ``schedule_grtef`` charges and discharges the most efficient stores
  first; no cross-charging.

The module keeps allocation arithmetic in plain-float helper functions
over precomputed per-store constants; simulation loops iterate these
millions of times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .fleet import FleetState, StepDecision, StoreSpec

# Guard against zero-progress float transfers in the cross-charging loop.
_EPS = 1e-12


@dataclass(frozen=True)
class ValueParams:
    """Per-store decay rates (per hour) for the value derivatives."""

    lambdas_per_hour: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lambdas_per_hour", tuple(float(x) for x in self.lambdas_per_hour))
        if any(lam < 0.0 or math.isnan(lam) for lam in self.lambdas_per_hour):
            raise ValueError("decay rates must be nonnegative")


class FleetConsts:
    """Per-store constants unpacked once for the per-step hot path."""

    __slots__ = ("n", "capacity", "out_power", "in_power", "eta", "max_charge", "inv_out")

    def __init__(self, fleet: Sequence[StoreSpec]):
        self.n = len(fleet)
        self.capacity = [s.capacity_mwh for s in fleet]
        self.out_power = [s.output_power_mw for s in fleet]
        self.in_power = [s.input_power_mw for s in fleet]
        self.eta = [s.efficiency for s in fleet]
        self.max_charge = [s.efficiency * s.input_power_mw for s in fleet]
        self.inv_out = [0.0 if math.isinf(p) else 1.0 / p for p in self.out_power]


def _values_of(levels, consts: FleetConsts, lambdas) -> list[float]:
    return [
        math.exp(-lam * s * inv) for lam, s, inv in zip(lambdas, levels, consts.inv_out)
    ]


def _fill_charge(levels, budget, consts: FleetConsts, order, rates) -> None:
    """Visit stores in order, drawing up to min(budget, Q, headroom/eta)."""
    for i in order:
        if budget <= 0.0:
            break
        eta = consts.eta[i]
        draw = (consts.capacity[i] - levels[i]) / eta
        in_power = consts.in_power[i]
        if in_power < draw:
            draw = in_power
        if budget < draw:
            draw = budget
        if draw > 0.0:
            rates[i] = eta * draw
            budget -= draw


def _fill_discharge(levels, demand, consts: FleetConsts, order, rates) -> None:
    for i in order:
        if demand <= 0.0:
            break
        d = levels[i]
        out_power = consts.out_power[i]
        if out_power < d:
            d = out_power
        if demand < d:
            d = demand
        if d > 0.0:
            rates[i] = -d
            demand -= d


def _cross_charge_raw(levels, rates, consts: FleetConsts, v) -> list[tuple[int, int, float]]:
    """Move energy from low-value dischargeable stores to high-value ones.

    Repeatedly pair the eligible supplier with the lowest v against the
    eligible receiver with the highest eta * v and transfer as much as
    either side allows, while v[supplier] < eta[receiver] * v[receiver]
    (the transfer gains value despite the round-trip loss).  Each full
    transfer saturates one side, so the loop ends within 2 * n transfers.
    Returns the (supplier, receiver, delivered_mwh) list.
    """
    n = consts.n
    transfers: list[tuple[int, int, float]] = []
    while True:
        supplier = None
        sv = math.inf
        for i in range(n):
            r = rates[i]
            if (
                r <= 0.0
                and r + consts.out_power[i] > _EPS
                and levels[i] + r > _EPS
                and v[i] < sv
            ):
                supplier = i
                sv = v[i]
        if supplier is None:
            break
        receiver = None
        best_priority = -math.inf
        for j in range(n):
            if j == supplier:
                continue
            r = rates[j]
            if (
                r >= 0.0
                and consts.max_charge[j] - r > _EPS
                and consts.capacity[j] - levels[j] - r > _EPS
            ):
                priority = consts.eta[j] * v[j]
                if priority > best_priority:
                    best_priority = priority
                    receiver = j
        if receiver is None or not sv < best_priority:
            break
        eta_r = consts.eta[receiver]
        x = min(
            levels[supplier] + rates[supplier],
            consts.out_power[supplier] + rates[supplier],
            (consts.capacity[receiver] - levels[receiver] - rates[receiver]) / eta_r,
            consts.in_power[receiver] - rates[receiver] / eta_r,
        )
        if x <= _EPS:
            break
        rates[supplier] -= x
        rates[receiver] += eta_r * x
        transfers.append((supplier, receiver, x))
        assert len(transfers) <= 2 * n, "cross-charging failed to terminate"
    return transfers


def _imbalance_raw(re, rates, consts: FleetConsts) -> float:
    u = re
    for i in range(consts.n):
        r = rates[i]
        if r < 0.0:
            u -= r
        else:
            u -= r / consts.eta[i]
    return u


def _value_step(levels, re, consts: FleetConsts, lambdas, cross_charging=True):
    """Raw value-priority step: returns (rates, spill, unserved)."""
    v = _values_of(levels, consts, lambdas)
    n = consts.n
    rates = [0.0] * n
    if re >= 0.0:
        order = sorted(range(n), key=lambda i: (-consts.eta[i] * v[i], i))
        _fill_charge(levels, re, consts, order, rates)
    else:
        order = sorted(range(n), key=lambda i: (v[i], i))
        _fill_discharge(levels, -re, consts, order, rates)
    if cross_charging:
        _cross_charge_raw(levels, rates, consts, v)
    u = _imbalance_raw(re, rates, consts)
    if re >= 0.0:
        return rates, max(u, 0.0) + 0.0, 0.0
    return rates, 0.0, max(-u, 0.0) + 0.0


def _ggddf_step(levels, re, consts: FleetConsts):
    n = consts.n
    rates = [0.0] * n
    if re >= 0.0:
        order = sorted(
            range(n), key=lambda i: (-(consts.capacity[i] - levels[i]) * consts.inv_out[i], i)
        )
        _fill_charge(levels, re, consts, order, rates)
    else:
        order = sorted(range(n), key=lambda i: (-levels[i] * consts.inv_out[i], i))
        _fill_discharge(levels, -re, consts, order, rates)
    u = _imbalance_raw(re, rates, consts)
    if re >= 0.0:
        return rates, max(u, 0.0) + 0.0, 0.0
    return rates, 0.0, max(-u, 0.0) + 0.0


def _grtef_step(levels, re, consts: FleetConsts):
    n = consts.n
    rates = [0.0] * n
    order = sorted(range(n), key=lambda i: (-consts.eta[i], i))
    if re >= 0.0:
        _fill_charge(levels, re, consts, order, rates)
    else:
        _fill_discharge(levels, -re, consts, order, rates)
    u = _imbalance_raw(re, rates, consts)
    if re >= 0.0:
        return rates, max(u, 0.0) + 0.0, 0.0
    return rates, 0.0, max(-u, 0.0) + 0.0


def value_derivatives(
    state: FleetState, fleet: Sequence[StoreSpec], params: ValueParams
) -> list[float]:
    """Marginal worth of one more stored MWh, per store.

    v[i] = exp(-lambda[i] * level[i] / output_power[i]); always in (0, 1]
    and decreasing in the level, so emptier (or slower-to-refill) stores
    look more valuable to top up and fuller ones are discharged first.
    """
    if len(params.lambdas_per_hour) != len(fleet):
        raise ValueError(
            f"{len(params.lambdas_per_hour)} decay rates for {len(fleet)} stores"
        )
    return _values_of(state.levels_mwh, FleetConsts(fleet), params.lambdas_per_hour)


def schedule_value_lp(
    state: FleetState,
    re_mw: float,
    fleet: Sequence[StoreSpec],
    params: ValueParams,
    cross_charging: bool = True,
) -> StepDecision:
    """Value-priority scheduler with cross-charging.

    Surplus hours fill stores in descending eta * v; deficit hours
    discharge in ascending v.  The value derivatives are computed once
    from the pre-step levels and held fixed for the whole step.  The
    resulting rates maximise sum(v[i] * rates[i]) over all feasible
    decisions with the same (greedy-minimal) spill or unserved energy.
    """
    if len(params.lambdas_per_hour) != len(fleet):
        raise ValueError(
            f"{len(params.lambdas_per_hour)} decay rates for {len(fleet)} stores"
        )
    rates, spill, unserved = _value_step(
        state.levels_mwh, re_mw, FleetConsts(fleet), params.lambdas_per_hour, cross_charging
    )
    return StepDecision(tuple(rates), spill_mwh=spill, unserved_mwh=unserved)


def schedule_ggddf(state: FleetState, re_mw: float, fleet: Sequence[StoreSpec]) -> StepDecision:
    """Greedy greatest-discharge-duration-first.

    Deficit hours discharge stores in descending level / output_power, so
    the store that would take longest to drain serves first and energy is
    never stranded in a single slow store while others sit empty.
    Surplus hours charge in descending (capacity - level) / output_power,
    restoring the largest duration deficit first.  No cross-charging.
    """
    rates, spill, unserved = _ggddf_step(state.levels_mwh, re_mw, FleetConsts(fleet))
    return StepDecision(tuple(rates), spill_mwh=spill, unserved_mwh=unserved)


def schedule_grtef(state: FleetState, re_mw: float, fleet: Sequence[StoreSpec]) -> StepDecision:
    """Greatest-round-trip-efficiency-first, both directions, no cross-charging."""
    rates, spill, unserved = _grtef_step(state.levels_mwh, re_mw, FleetConsts(fleet))
    return StepDecision(tuple(rates), spill_mwh=spill, unserved_mwh=unserved)


def _cross_charge(levels, rates, fleet: Sequence[StoreSpec], v):
    """Compatibility wrapper over the raw cross-charging loop."""
    return _cross_charge_raw(levels, rates, FleetConsts(fleet), v)


@dataclass(frozen=True)
class Policy:
    """Dispatchable policy choice: 'value' (with params), 'ggddf' or 'grtef'."""

    kind: str
    params: ValueParams | None = None

    _KINDS = ("value", "ggddf", "grtef")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "value" and self.params is None:
            raise ValueError("value policy requires ValueParams")

    @classmethod
    def value(cls, lambdas_per_hour: Sequence[float]) -> "Policy":
        return cls("value", ValueParams(tuple(lambdas_per_hour)))

    @classmethod
    def ggddf(cls) -> "Policy":
        return cls("ggddf")

    @classmethod
    def grtef(cls) -> "Policy":
        return cls("grtef")

    def decide(self, state: FleetState, re_mw: float, fleet: Sequence[StoreSpec]) -> StepDecision:
        if self.kind == "value":
            return schedule_value_lp(state, re_mw, fleet, self.params)
        if self.kind == "ggddf":
            return schedule_ggddf(state, re_mw, fleet)
        return schedule_grtef(state, re_mw, fleet)

    def raw_step(self, consts: FleetConsts):
        """Bind a (levels, re) -> (rates, spill, unserved) fast-path closure."""
        if self.kind == "value":
            lambdas = self.params.lambdas_per_hour
            if len(lambdas) != consts.n:
                raise ValueError(f"{len(lambdas)} decay rates for {consts.n} stores")
            return lambda levels, re: _value_step(levels, re, consts, lambdas)
        if self.kind == "ggddf":
            return lambda levels, re: _ggddf_step(levels, re, consts)
        return lambda levels, re: _grtef_step(levels, re, consts)
