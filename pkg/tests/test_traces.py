import numpy as np
import pytest

from storefleet.traces import (
    DegenerateInput,
    InsufficientData,
    InvalidParams,
    NonFiniteValue,
    ParseError,
    ResidualTrace,
    SchemaError,
    SynthParams,
    load_csv,
    scale_to_overcapacity,
    synthesize,
    trace_stats,
    write_csv,
)


class TestLoadCsv:
    def test_residual_schema(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("residual_mw\n1\n-2\n3\n")
        trace = load_csv(path)
        assert trace.values_mw.tolist() == [1.0, -2.0, 3.0]
        assert trace.origin.path == str(path)

    def test_component_schema(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("demand_mw,wind_mw,solar_mw\n10,6,2\n")
        trace = load_csv(path)
        assert trace.values_mw.tolist() == [-2.0]

    def test_nan_rejected_with_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("residual_mw\n1\nnan\n")
        with pytest.raises(NonFiniteValue) as err:
            load_csv(path)
        assert err.value.line == 3

    def test_junk_rejected_with_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("residual_mw\n1\npotato\n")
        with pytest.raises(ParseError) as err:
            load_csv(path)
        assert err.value.line == 3

    def test_unknown_header_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("power\n1\n")
        with pytest.raises(SchemaError):
            load_csv(path)

    def test_no_rows_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("residual_mw\n")
        with pytest.raises(SchemaError):
            load_csv(path)

    def test_round_trip_is_identity(self, tmp_path):
        values = np.random.default_rng(3).uniform(-1e4, 1e4, 50)
        trace = ResidualTrace.from_values(values)
        path = tmp_path / "t.csv"
        write_csv(trace, path)
        again = load_csv(path)
        assert np.array_equal(again.values_mw, trace.values_mw)


class TestScaleToOvercapacity:
    def test_gb_scale_mean(self):
        rng = np.random.default_rng(5)
        demand = 68600.0 * (1.0 + 0.1 * rng.standard_normal(5000))
        generation = rng.uniform(1.0, 2.0, 5000)
        trace = scale_to_overcapacity(demand, generation, 0.30)
        assert np.mean(trace.values_mw) == pytest.approx(0.30 * np.mean(demand), rel=1e-9)
        assert np.mean(trace.values_mw) / 1e3 == pytest.approx(20.58, rel=1e-2)

    def test_zero_overcapacity_balances(self):
        demand = np.array([10.0, 20.0, 30.0])
        generation = np.array([5.0, 5.0, 20.0])
        trace = scale_to_overcapacity(demand, generation, 0.0)
        assert np.mean(trace.values_mw) == pytest.approx(0.0, abs=1e-12)

    def test_proportional_case(self):
        demand = np.array([4.0, 8.0])
        trace = scale_to_overcapacity(demand, demand, 0.25)
        assert trace.values_mw.tolist() == pytest.approx((0.25 * demand).tolist())

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateInput):
            scale_to_overcapacity([0.0, 0.0], [1.0, 1.0], 0.3)
        with pytest.raises(DegenerateInput):
            scale_to_overcapacity([1.0, 1.0], [-1.0, -1.0], 0.3)


class TestSynthesize:
    def test_same_seed_bit_identical(self):
        params = SynthParams(years=0.1, seed=99)
        d1, g1 = synthesize(params)
        d2, g2 = synthesize(params)
        assert np.array_equal(d1, d2)
        assert np.array_equal(g1, g2)

    def test_different_seed_differs(self):
        d1, g1 = synthesize(SynthParams(years=0.1, seed=1))
        d2, g2 = synthesize(SynthParams(years=0.1, seed=2))
        assert not np.array_equal(g1, g2)
        assert np.array_equal(d1, d2)  # demand carries no noise

    def test_flat_params_give_constant_demand_periodic_generation(self):
        params = SynthParams(
            years=0.05, seed=0, diurnal_amp=0.0, seasonal_amp=0.0, weekly_amp=0.0, noise_sd=0.0
        )
        demand, generation = synthesize(params)
        assert np.all(demand == params.base_demand_mw)
        # Daily cycle repeats up to the slow seasonal solar envelope.
        day = generation[:24]
        later = generation[24:48]
        assert day == pytest.approx(later, rel=2e-2)
        assert generation.std() > 0.0  # solar diurnal cycle

    def test_lengths_exact(self):
        demand, generation = synthesize(SynthParams(years=2.0, seed=0))
        assert len(demand) == len(generation) == 2 * 8760

    def test_default_year_has_skewed_persistent_residual(self):
        demand, generation = synthesize(SynthParams(years=1.0, seed=42))
        trace = scale_to_overcapacity(demand, generation, 0.3)
        assert trace.values_mw.min() < 0.0 < trace.values_mw.max()
        stats = trace_stats(trace, bins=50, lags=[0, 1])
        assert stats.acf[1] > 0.5

    def test_invalid_params_rejected(self):
        with pytest.raises(InvalidParams):
            synthesize(SynthParams(years=0.0))
        with pytest.raises(InvalidParams):
            synthesize(SynthParams(solar_share=1.5))
        with pytest.raises(InvalidParams):
            synthesize(SynthParams(ar_coeff=1.0))
        with pytest.raises(InvalidParams):
            synthesize(SynthParams(noise_sd=-0.1))


class TestTraceStats:
    def test_lag_zero_is_one(self):
        trace = ResidualTrace.from_values(np.random.default_rng(7).uniform(-1, 1, 500))
        stats = trace_stats(trace, bins=10, lags=[0, 1, 2])
        assert stats.acf[0] == 1.0

    def test_iid_noise_has_no_lag1_correlation(self):
        trace = ResidualTrace.from_values(np.random.default_rng(11).standard_normal(10_000))
        stats = trace_stats(trace, bins=10, lags=[0, 1])
        assert abs(stats.acf[1]) < 0.05

    def test_constant_trace_rejected(self):
        trace = ResidualTrace.from_values(np.full(100, 3.0))
        with pytest.raises(InsufficientData):
            trace_stats(trace, bins=10, lags=[0, 1])

    def test_lag_beyond_length_rejected(self):
        trace = ResidualTrace.from_values([1.0, 2.0, 3.0])
        with pytest.raises(InsufficientData):
            trace_stats(trace, lags=[0, 3])

    def test_histogram_counts_everything(self):
        values = np.random.default_rng(13).uniform(-5, 5, 1000)
        stats = trace_stats(ResidualTrace.from_values(values), bins=20, lags=[0])
        assert stats.bin_counts.sum() == 1000
        assert len(stats.bin_edges) == 21


class TestResidualTrace:
    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(Exception):
            ResidualTrace.from_values([])
        with pytest.raises(NonFiniteValue):
            ResidualTrace.from_values([1.0, np.inf])
