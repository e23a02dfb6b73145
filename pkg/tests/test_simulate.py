import math

import numpy as np
import pytest
from scipy import stats

from reportrates import (
    CalibrationError,
    DurationDistribution,
    SimConfig,
    TypeSpec,
    calibrate_death_params,
    duplicate_fraction,
    simulate_incident,
    simulate_incident_with_duration,
    simulate_system,
    simulate_system_with_durations,
    steady_state_observed_rate,
)
from reportrates.simulate import _substream


def make_type(incident_rate=2.0, report_rate=2.0, mu=0.065, scale=100.0, index=0):
    return TypeSpec(
        index=index,
        covariates=(0.0,),
        incident_log_rate=math.log(incident_rate) if incident_rate > 0 else -math.inf,
        report_log_rate=math.log(report_rate),
        death_base_rate=mu,
        death_scale=scale,
    )


class TestTypeSpec:
    def test_death_scale_below_one_rejected(self):
        with pytest.raises(ValueError):
            make_type(scale=0.5)

    def test_negative_death_rate_rejected(self):
        with pytest.raises(ValueError):
            make_type(mu=-0.1)

    def test_zero_incident_rate_allowed(self):
        spec = make_type(incident_rate=0.0)
        assert spec.incident_rate == 0.0


class TestSimulateIncident:
    def test_dominant_death_clock_yields_no_reports(self):
        # death clock at rate 1e6 vs reports at rate 1: virtually every
        # incident dies unreported
        spec = make_type(mu=1e6, scale=1.0, report_rate=1.0)
        rng = _substream(0, 0)
        zero = sum(
            simulate_incident(spec, 0.0, 100.0, rng).total_reports == 0
            for _ in range(2000)
        )
        assert zero >= 1990

    def test_reports_within_lifetime_and_horizon(self):
        spec = make_type()
        rng = _substream(1, 0)
        for _ in range(500):
            trace = simulate_incident(spec, 3.0, 50.0, rng)
            for t in trace.report_times:
                assert 3.0 <= t <= min(trace.death_time, 50.0)

    def test_no_death_gives_poisson_counts(self):
        # mu=0: the incident never dies, so counts over a window of length
        # h are Poisson(rate * h); chi-square fit against the exact pmf
        spec = make_type(mu=0.0, scale=1.0)
        rng = _substream(2, 0)
        h = 3.0
        counts = np.array(
            [simulate_incident(spec, 0.0, h, rng).total_reports for _ in range(10_000)]
        )
        mean = 2.0 * h
        grid = np.arange(0, 16)
        expected = stats.poisson.pmf(grid, mean) * counts.size
        expected[-1] = counts.size - expected[:-1].sum()
        observed = np.bincount(np.minimum(counts, 15), minlength=16)
        chi2 = ((observed - expected) ** 2 / expected).sum()
        assert chi2 < stats.chi2.ppf(0.99, df=15)

    def test_paper_duplicate_fraction(self):
        # calibrated death parameters reproduce the real-data share of
        # duplicate reports
        spec = make_type()
        config = SimConfig(types=(spec,), horizon=300.0, seed=909, replicates=40)
        total_reports, total_dups = 0, 0
        for rep in range(config.replicates):
            traces = simulate_system(config, rep)
            total_reports += sum(t.total_reports for t in traces)
            total_dups += sum(t.total_reports - 1 for t in traces)
        assert abs(total_dups / total_reports - 0.187) < 0.01

    def test_interarrival_times_are_exponential(self):
        # with the death clock off, gaps between successive reports pool to
        # an Exp(rate) sample; KS test at the 1% level
        spec = make_type(mu=0.0, scale=1.0)
        rng = _substream(3, 0)
        gaps = []
        while len(gaps) < 10_000:
            trace = simulate_incident(spec, 0.0, 40.0, rng)
            ts = np.array(trace.report_times)
            if ts.size >= 2:
                gaps.extend(np.diff(ts))
        result = stats.kstest(np.array(gaps[:10_000]), "expon", args=(0, 0.5))
        assert result.pvalue > 0.01


class TestSimulateSystem:
    def test_zero_incident_rate_gives_empty_output(self):
        config = SimConfig(
            types=(make_type(incident_rate=0.0),), horizon=300.0, seed=4
        )
        assert simulate_system(config) == []

    def test_observed_count_matches_steady_state_oracle(self):
        # death_scale=1 makes lifetimes exponential and independent of
        # reporting, so the analytic observed-incident rate applies
        spec = make_type(incident_rate=3.0, report_rate=2.0, mu=0.5, scale=1.0)
        config = SimConfig(types=(spec,), horizon=400.0, seed=5)
        observed = len(simulate_system(config))
        rate = steady_state_observed_rate(
            3.0, 2.0, DurationDistribution.exponential(0.5)
        )
        expect = rate * 400.0
        assert abs(observed - expect) < 3 * math.sqrt(expect)

    def test_bit_identical_given_seed(self):
        config = SimConfig(types=(make_type(),), horizon=100.0, seed=6, replicates=2)
        assert simulate_system(config, 1) == simulate_system(config, 1)

    def test_replicates_have_independent_substreams(self):
        config = SimConfig(types=(make_type(),), horizon=100.0, seed=6, replicates=2)
        assert simulate_system(config, 0) != simulate_system(config, 1)

    def test_observation_probability_matches_lemma(self):
        # fraction of incidents reported at least once converges to
        # p = 1 - E[exp(-rate * T)]
        rng = _substream(7, 0)
        n = 10_000
        observed = sum(
            simulate_incident_with_duration(2.0, 1.0, 0.0, 1e9, rng).total_reports
            >= 1
            for _ in range(n)
        )
        p = 1.0 - math.exp(-2.0)
        se = math.sqrt(p * (1 - p) / n)
        assert abs(observed / n - p) < 2 * se


class TestCalibration:
    def test_paper_target_recovers_paper_death_rate(self):
        mu, scale = calibrate_death_params(
            0.187, report_rate=2.0, incident_rate=2.0, horizon=300.0,
            death_scale=100.0, seed=11,
        )
        assert scale == 100.0
        assert abs(mu - 0.065) < 0.01

    def test_smaller_target_needs_larger_death_rate(self):
        mus = [
            calibrate_death_params(
                target, 2.0, 2.0, 300.0, death_scale=100.0, seed=11
            )[0]
            for target in (0.15, 0.10, 0.05)
        ]
        assert mus[0] < mus[1] < mus[2]

    def test_resimulation_confirms_calibrated_rate(self):
        # death_scale=1, target 0.5: search, then verify on freshly
        # simulated traces
        mu, _ = calibrate_death_params(
            0.5, report_rate=2.0, incident_rate=2.0, horizon=300.0,
            death_scale=1.0, seed=12,
        )
        spec = make_type(incident_rate=4.0, mu=mu, scale=1.0)
        config = SimConfig(types=(spec,), horizon=300.0, seed=77, replicates=30)
        reports, dups = 0, 0
        for rep in range(config.replicates):
            traces = simulate_system(config, rep)
            reports += sum(t.total_reports for t in traces)
            dups += sum(t.total_reports - 1 for t in traces)
        assert abs(dups / reports - 0.5) < 0.01

    def test_unreachable_target_names_bracket(self):
        with pytest.raises(CalibrationError, match=r"\[0.1, 0.2\]"):
            calibrate_death_params(
                0.9, 2.0, 2.0, 300.0, death_scale=100.0, seed=1,
                bracket=(0.1, 0.2),
            )


class TestSteadyStateObservedRate:
    def test_point_mass_closed_form(self):
        d = DurationDistribution.point_mass(1.0)
        assert steady_state_observed_rate(2.0, 2.0, d) == pytest.approx(
            2.0 * (1.0 - math.exp(-2.0)), abs=1e-12
        )

    def test_fast_reporting_observes_everything(self):
        d = DurationDistribution.point_mass(1.0)
        assert steady_state_observed_rate(2.0, 1e9, d) == pytest.approx(2.0)

    def test_exponential_duration_analytic(self):
        # E[exp(-lam T)] for T ~ Exp(mu) is mu / (lam + mu)
        d = DurationDistribution.exponential(1.0)
        assert steady_state_observed_rate(1.0, 2.0, d) == pytest.approx(
            2.0 / 3.0, rel=1e-9
        )

    def test_empirical_samples(self):
        samples = [0.5, 1.5, 3.0]
        d = DurationDistribution.empirical(samples)
        expect = 2.0 * (1.0 - np.mean([math.exp(-2.0 * s) for s in samples]))
        assert steady_state_observed_rate(2.0, 2.0, d) == pytest.approx(expect)

    def test_monotone_in_report_rate_linear_in_incident_rate(self):
        d = DurationDistribution.exponential(0.7)
        rates = [steady_state_observed_rate(1.0, lam, d) for lam in (0.5, 1, 2, 4)]
        assert all(a < b for a, b in zip(rates, rates[1:]))
        assert steady_state_observed_rate(3.0, 2.0, d) == pytest.approx(
            3.0 * steady_state_observed_rate(1.0, 2.0, d)
        )

    def test_duration_validation(self):
        with pytest.raises(ValueError):
            DurationDistribution.exponential(0.0)
        with pytest.raises(ValueError):
            DurationDistribution.empirical([1.0, -2.0])


class TestSystemWithDurations:
    def test_point_mass_system_matches_oracle(self):
        d = DurationDistribution.point_mass(1.0)
        traces = simulate_system_with_durations(2.0, 2.0, d, horizon=600.0, seed=13)
        expect = steady_state_observed_rate(2.0, 2.0, d) * 600.0
        assert abs(len(traces) - expect) < 3 * math.sqrt(expect)

    def test_duplicate_fraction_of_empty_is_zero(self):
        assert duplicate_fraction([]) == 0.0
