"""Residual-energy trace ingestion, rescaling, synthesis and statistics.

A residual-energy trace is an hourly series of generation minus demand
in MW: positive hours have surplus available for charging, negative
hours have demand to be met from storage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class TraceError(Exception):
    """Base class for trace ingestion/synthesis errors."""


class ParseError(TraceError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class SchemaError(TraceError):
    pass


class NonFiniteValue(TraceError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class DegenerateInput(TraceError):
    pass


class InvalidParams(TraceError):
    pass


class InsufficientData(TraceError):
    pass


@dataclass(frozen=True)
class CsvSource:
    path: str


@dataclass(frozen=True)
class SyntheticSource:
    seed: int
    params: tuple = ()


@dataclass(frozen=True)
class ResidualTrace:
    """Hourly residual-energy series (MW) with provenance metadata."""

    values_mw: np.ndarray
    origin: CsvSource | SyntheticSource | None = None
    overcapacity: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.values_mw, dtype=float)
        if arr.ndim != 1 or len(arr) == 0:
            raise TraceError("trace must be a nonempty 1-D series")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("trace contains NaN or infinite values")
        object.__setattr__(self, "values_mw", arr)

    @classmethod
    def from_values(cls, values: Sequence[float], overcapacity: float | None = None) -> "ResidualTrace":
        return cls(np.asarray(values, dtype=float), origin=None, overcapacity=overcapacity)

    def __len__(self) -> int:
        return len(self.values_mw)


_RESIDUAL_COLUMN = "residual_mw"
_COMPONENT_COLUMNS = ("demand_mw", "wind_mw", "solar_mw")


def load_csv(path, schema: str | None = None) -> ResidualTrace:
    """Load a trace from CSV.

    Two schemas are accepted: a single ``residual_mw`` column, or the
    triple ``demand_mw, wind_mw, solar_mw`` (residual = wind + solar -
    demand).  ``schema`` may pin one of ``"residual"`` / ``"components"``
    or be None for auto-detection from the header.  NaN or infinite
    entries are rejected with their line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]

        if schema is None:
            if _RESIDUAL_COLUMN in header:
                schema = "residual"
            elif all(c in header for c in _COMPONENT_COLUMNS):
                schema = "components"
            else:
                raise SchemaError(
                    f"{path}: header {header} has neither {_RESIDUAL_COLUMN!r} "
                    f"nor all of {_COMPONENT_COLUMNS}"
                )
        if schema == "residual":
            wanted = (_RESIDUAL_COLUMN,)
        elif schema == "components":
            wanted = _COMPONENT_COLUMNS
        else:
            raise SchemaError(f"unknown schema {schema!r}")
        try:
            cols = [header.index(c) for c in wanted]
        except ValueError as exc:
            raise SchemaError(f"{path}: missing column for schema {schema!r}: {exc}") from None

        values = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            parsed = []
            for c in cols:
                try:
                    parsed.append(float(row[c]))
                except (ValueError, IndexError):
                    raise ParseError(
                        f"{path}:{line_no}: cannot parse {row[c] if c < len(row) else '<missing>'!r}",
                        line=line_no,
                    ) from None
            if any(not math.isfinite(x) for x in parsed):
                raise NonFiniteValue(f"{path}:{line_no}: non-finite value {parsed}", line=line_no)
            if schema == "residual":
                values.append(parsed[0])
            else:
                demand, wind, solar = parsed
                values.append(wind + solar - demand)

    if not values:
        raise SchemaError(f"{path}: no data rows")
    return ResidualTrace(np.asarray(values), origin=CsvSource(str(path)))


def write_csv(trace: ResidualTrace, path) -> None:
    """Write a trace as a single residual_mw column; round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_RESIDUAL_COLUMN}\n")
        for x in trace.values_mw:
            fh.write(repr(float(x)) + "\n")


def scale_to_overcapacity(
    demand_mw: Sequence[float], generation_mw: Sequence[float], overcapacity: float
) -> ResidualTrace:
    """Rescale generation so its mean exceeds mean demand by a fraction.

    Generation is multiplied by k = (1 + overcapacity) * mean(demand) /
    mean(generation); the returned residual k * generation - demand then
    has mean overcapacity * mean(demand) exactly.
    """
    demand = np.asarray(demand_mw, dtype=float)
    generation = np.asarray(generation_mw, dtype=float)
    if demand.shape != generation.shape:
        raise DegenerateInput("demand and generation series must have equal length")
    mean_demand = float(np.mean(demand))
    mean_generation = float(np.mean(generation))
    if mean_demand <= 0.0 or mean_generation <= 0.0:
        raise DegenerateInput(
            f"means must be positive (demand {mean_demand}, generation {mean_generation})"
        )
    k = (1.0 + overcapacity) * mean_demand / mean_generation
    return ResidualTrace(k * generation - demand, overcapacity=overcapacity)


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the synthetic demand/generation generator.

    A stand-in for multi-year reanalysis-based series: demand carries
    diurnal, weekly and seasonal cycles on a constant base; wind is an
    AR(1)-modulated nonnegative series (persistent over days, so calm
    and windy spells last); solar is a clipped daytime profile peaking in
    summer.  Deterministic for a given seed.
    """

    years: float = 1.0
    seed: int = 0
    base_demand_mw: float = 1000.0
    diurnal_amp: float = 0.15
    seasonal_amp: float = 0.25
    weekly_amp: float = 0.06
    ar_coeff: float = 0.995
    noise_sd: float = 0.08
    solar_share: float = 0.2


HOURS_PER_YEAR = 8760


def synthesize(params: SynthParams) -> tuple[np.ndarray, np.ndarray]:
    """Generate (demand_mw, generation_mw), each of length years * 8760.

    Both series have mean approximately base_demand_mw, so pairing with
    ``scale_to_overcapacity`` produces a residual whose surplus fraction
    is controlled exactly.
    """
    n = int(round(params.years * HOURS_PER_YEAR))
    if n < 1:
        raise InvalidParams("years must cover at least one hour")
    if not 0.0 <= params.solar_share <= 1.0:
        raise InvalidParams(f"solar_share must lie in [0, 1], got {params.solar_share}")
    if not abs(params.ar_coeff) < 1.0:
        raise InvalidParams(f"ar_coeff must satisfy |a| < 1, got {params.ar_coeff}")
    if params.noise_sd < 0.0 or params.base_demand_mw <= 0.0:
        raise InvalidParams("noise_sd must be >= 0 and base_demand_mw > 0")
    if min(params.diurnal_amp, params.seasonal_amp, params.weekly_amp) < 0.0:
        raise InvalidParams("cycle amplitudes must be nonnegative")

    h = np.arange(n, dtype=float)
    two_pi = 2.0 * math.pi

    demand = params.base_demand_mw * (
        1.0
        + params.diurnal_amp * np.cos(two_pi * (h - 18.0) / 24.0)
        + params.weekly_amp * np.cos(two_pi * h / 168.0)
        + params.seasonal_amp * np.cos(two_pi * (h - 400.0) / HOURS_PER_YEAR)
    )

    rng = np.random.default_rng(params.seed)
    eps = rng.standard_normal(n)
    x = np.empty(n)
    a = params.ar_coeff
    stationary_sd = params.noise_sd / math.sqrt(1.0 - a * a) if params.noise_sd > 0.0 else 0.0
    x[0] = stationary_sd * eps[0]
    for t in range(1, n):
        x[t] = a * x[t - 1] + params.noise_sd * eps[t]
    wind = np.maximum(1.0 + x, 0.0)

    daylight = np.maximum(np.cos(two_pi * (h - 13.0) / 24.0) - 0.3, 0.0)
    summer = 1.0 + 0.5 * np.cos(two_pi * (h - 400.0 - HOURS_PER_YEAR / 2.0) / HOURS_PER_YEAR)
    solar = daylight * summer

    wind_mean = float(np.mean(wind))
    solar_mean = float(np.mean(solar))
    blend = np.zeros(n)
    if params.solar_share < 1.0:
        if wind_mean <= 0.0:
            raise InvalidParams("wind series degenerated to zero; lower noise_sd")
        blend += (1.0 - params.solar_share) * wind / wind_mean
    if params.solar_share > 0.0:
        if solar_mean <= 0.0:
            raise InvalidParams("solar profile degenerated to zero")
        blend += params.solar_share * solar / solar_mean
    generation = params.base_demand_mw * blend
    return demand, generation


@dataclass(frozen=True)
class TraceStats:
    bin_counts: np.ndarray
    bin_edges: np.ndarray
    lags: tuple[int, ...]
    acf: np.ndarray


def trace_stats(trace: ResidualTrace, bins: int = 100, lags: Sequence[int] | None = None) -> TraceStats:
    """Histogram plus sample autocorrelation at the requested lags."""
    values = trace.values_mw
    if lags is None:
        lags = range(0, min(501, len(values)))
    lags = tuple(int(k) for k in lags)
    if any(k < 0 for k in lags):
        raise InsufficientData("lags must be nonnegative")
    if lags and max(lags) >= len(values):
        raise InsufficientData(
            f"trace length {len(values)} does not cover lag {max(lags)}"
        )
    centered = values - values.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0.0:
        raise InsufficientData("zero-variance trace has no autocorrelation")
    acf = np.empty(len(lags))
    for idx, k in enumerate(lags):
        acf[idx] = 1.0 if k == 0 else float(np.dot(centered[:-k], centered[k:])) / denom
    counts, edges = np.histogram(values, bins=bins)
    return TraceStats(bin_counts=counts, bin_edges=edges, lags=lags, acf=acf)


def write_stats_csv(stats: TraceStats, histogram_path, acf_path) -> None:
    with open(histogram_path, "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count\n")
        for left, right, count in zip(stats.bin_edges[:-1], stats.bin_edges[1:], stats.bin_counts):
            fh.write(f"{float(left)!r},{float(right)!r},{int(count)}\n")
    with open(acf_path, "w", encoding="utf-8") as fh:
        fh.write("lag,acf\n")
        for lag, value in zip(stats.lags, stats.acf):
            fh.write(f"{lag},{float(value)!r}\n")
