"""
Tests for the analysis module: fringe fitting, visibility statistics, key
error rates, Bell estimates and the run report.
"""

import math

import numpy as np
import pytest

from ghzshare.analysis import (
    COMBOS,
    AnalysisError,
    FringeFitError,
    FringePoint,
    FringeScan,
    InsufficientStatisticsError,
    MeasuredRound,
    accidental_error_fraction,
    bit_rate,
    build_run_report,
    combo_label,
    combo_signs,
    correlation_from_ports,
    correlation_table,
    estimate_s3,
    fit_combo,
    fit_fringe,
    key_visibility,
    optimize_bell_settings,
    qber_from_keys,
    qber_from_visibility,
    s3_std_error,
    s_from_visibility,
    sigma_distance,
    visibility_from_extrema,
    weighted_mean,
)
from ghzshare.correlations import OPTIMAL_BELL_SETTINGS, Phase, outcome_distribution, s3_for_settings

STEPS = 16


def _expected_scan(v: float, peak: float = 1500.0, steps: int = STEPS) -> FringeScan:
    """Noise-free scan: each combination follows peak/2 (1 + jk V cos phi)."""
    points = []
    for n in range(steps):
        phi = 2 * math.pi * n / steps
        counts = {}
        for combo in COMBOS:
            j, k = combo_signs(combo)
            counts[combo] = int(round(peak / 2 * (1 + j * k * v * math.cos(phi))))
        points.append(FringePoint(phase=Phase(phi), counts=counts, duration=100.0))
    return FringeScan(points)


def _poisson_scan(v: float, rng, peak: float = 1500.0, steps: int = STEPS) -> FringeScan:
    points = []
    for n in range(steps):
        phi = 2 * math.pi * n / steps
        counts = {}
        for combo in COMBOS:
            j, k = combo_signs(combo)
            counts[combo] = int(rng.poisson(peak / 2 * (1 + j * k * v * math.cos(phi))))
        points.append(FringePoint(phase=Phase(phi), counts=counts, duration=100.0))
    return FringeScan(points)


@pytest.mark.unit
class TestCombinations:
    """Detector-combination labels."""

    def test_labels(self):
        assert combo_label(1, -1) == '+-'
        assert combo_signs('-+') == (-1, 1)

    def test_unknown_label(self):
        with pytest.raises(AnalysisError):
            combo_signs('++-')

    def test_point_validation(self):
        with pytest.raises(AnalysisError):
            FringePoint(phase=Phase(0.0), counts={'++': -1}, duration=1.0)
        with pytest.raises(AnalysisError):
            FringePoint(phase=Phase(0.0), counts={'xx': 1}, duration=1.0)
        with pytest.raises(AnalysisError):
            FringePoint(phase=Phase(0.0), counts={'++': 1}, duration=0.0)


@pytest.mark.unit
class TestFringeFit:
    """Sinusoidal fits with the period fixed to 2 pi."""

    def test_recovers_visibility_from_expected_counts(self):
        fit = fit_fringe(_expected_scan(0.922))
        assert fit.visibility.value == pytest.approx(0.922, abs=1e-3)
        assert set(fit.combos) == set(COMBOS)
        for combo in ('++', '--'):
            assert Phase(fit.combos[combo].phase0).distance(Phase(0.0)) < 1e-3
        for combo in ('+-', '-+'):
            assert Phase(fit.combos[combo].phase0).distance(Phase(math.pi)) < 1e-3

    def test_phase_offset(self):
        phases = np.linspace(0, 2 * math.pi, 12, endpoint=False)
        counts = 800 * (1 + 0.5 * np.cos(phases + 0.7))
        fit = fit_combo(phases, counts)
        assert fit.visibility == pytest.approx(0.5, abs=1e-6)
        assert fit.phase0 == pytest.approx(0.7, abs=1e-6)
        assert fit.offset == pytest.approx(800.0, rel=1e-6)

    @pytest.mark.statistical
    def test_poisson_scan_within_errors(self, rng):
        fit = fit_fringe(_poisson_scan(0.922, rng))
        estimate = fit.visibility
        assert 0.0 < estimate.std_error < 0.02
        assert abs(estimate.value - 0.922) < 3 * estimate.std_error

    def test_constant_counts_flag_unreliable_phase(self):
        phases = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        fit = fit_combo(phases, np.full(8, 50.0))
        assert fit.visibility == 0.0
        assert not fit.phase0_reliable

    def test_empty_combination_rejected(self):
        phases = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        with pytest.raises(FringeFitError):
            fit_combo(phases, np.zeros(8))

    def test_scan_too_short(self):
        scan = _expected_scan(0.9, steps=6)
        assert any("at least" in issue for issue in scan.problems())
        with pytest.raises(FringeFitError):
            fit_fringe(scan)

    def test_scan_must_cover_period(self):
        points = [FringePoint(phase=Phase(0.1 * n), counts={'++': 10}, duration=1.0) for n in range(10)]
        scan = FringeScan(points)
        assert scan.max_gap() > math.pi / 2
        assert any("full period" in issue for issue in scan.problems())

    def test_unequal_durations_are_normalized(self):
        scan = _expected_scan(0.8)
        doubled = FringeScan([
            FringePoint(phase=p.phase, counts={c: 2 * n for c, n in p.counts.items()}, duration=200.0)
            if index % 2 else p
            for index, p in enumerate(scan.points)
        ])
        assert fit_fringe(doubled).visibility.value == pytest.approx(fit_fringe(scan).visibility.value,
                                                                     abs=1e-4)

    def test_longer_points_carry_more_weight(self):
        scan = _expected_scan(0.8)
        longer = FringeScan([scan.points[0]] + [
            FringePoint(phase=p.phase, counts={c: 4 * n for c, n in p.counts.items()}, duration=400.0)
            for p in scan.points[1:]
        ])
        base_fit, longer_fit = fit_fringe(scan), fit_fringe(longer)
        base, extended = base_fit.visibility, longer_fit.visibility
        assert extended.value == pytest.approx(base.value, abs=1e-3)
        # Errors follow the raw counts: four times the counts halves the error.
        assert extended.std_error < 0.6 * base.std_error
        for combo in COMBOS:
            assert longer_fit.combos[combo].offset == pytest.approx(base_fit.combos[combo].offset, rel=1e-3)

    def test_rejects_invalid_count_errors(self):
        phases = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        counts = 100 * (1 + 0.5 * np.cos(phases))
        with pytest.raises(FringeFitError):
            fit_combo(phases, counts, sigma=np.zeros(8))
        with pytest.raises(FringeFitError):
            fit_combo(phases, counts, sigma=np.ones(3))

    def test_noiseless_full_visibility(self):
        phases = np.linspace(0, 2 * math.pi, STEPS, endpoint=False)
        fit = fit_combo(phases, 800.0 * (1 + np.cos(phases)))
        assert fit.visibility == pytest.approx(1.0, abs=1e-9)
        assert fit.offset == pytest.approx(800.0, rel=1e-9)

    def test_laboratory_extrema(self):
        # Maximum about 1600 and minimum about 70 counts per 100 s window.
        offset, amplitude = (1600 + 70) / 2, (1600 - 70) / 2
        points = []
        for n in range(STEPS):
            phi = 2 * math.pi * n / STEPS
            counts = {}
            for combo in COMBOS:
                j, k = combo_signs(combo)
                counts[combo] = int(round(offset + j * k * amplitude * math.cos(phi)))
            points.append(FringePoint(phase=Phase(phi), counts=counts, duration=100.0))
        fit = fit_fringe(FringeScan(points))
        assert visibility_from_extrema(1600, 70) == pytest.approx(0.916, abs=5e-4)
        assert fit.visibility.value == pytest.approx(visibility_from_extrema(1600, 70), abs=1e-3)
        for combo in COMBOS:
            assert fit.combos[combo].visibility == pytest.approx(0.916, abs=1e-3)

    def test_doubling_counts_keeps_visibility(self):
        scan = _expected_scan(0.922)
        doubled = FringeScan([
            FringePoint(phase=p.phase, counts={c: 2 * n for c, n in p.counts.items()}, duration=p.duration)
            for p in scan.points
        ])
        base, twice = fit_fringe(scan), fit_fringe(doubled)
        assert abs(twice.visibility.value - base.visibility.value) < 1e-12
        assert twice.visibility.std_error < base.visibility.std_error

    @pytest.mark.statistical
    def test_repeated_scans_recover_parameters(self):
        rng = np.random.default_rng(31)
        v_true, offset_true, phase_true = 0.8, 2000.0, 0.4
        phases = np.linspace(0, 2 * math.pi, STEPS, endpoint=False)
        pulls = {'visibility': [], 'offset': [], 'phase0': []}
        for _ in range(100):
            counts = rng.poisson(offset_true * (1 + v_true * np.cos(phases + phase_true)))
            fit = fit_combo(phases, counts)
            phase_error = (fit.phase0 - phase_true + math.pi) % (2 * math.pi) - math.pi
            pulls['visibility'].append((fit.visibility - v_true) / fit.visibility_std)
            pulls['offset'].append((fit.offset - offset_true) / fit.offset_std)
            pulls['phase0'].append(phase_error / fit.phase0_std)
        for name, values in pulls.items():
            values = np.abs(np.asarray(values))
            assert np.count_nonzero(values < 3.0) >= 95, name
            assert abs(np.mean(pulls[name])) < 0.5, name
            assert 0.75 < np.std(pulls[name]) < 1.25, name

    def test_skips_combinations_without_counts(self):
        scan = FringeScan([
            FringePoint(phase=p.phase, counts={'++': p.counts['++']}, duration=p.duration)
            for p in _expected_scan(0.9).points
        ])
        fit = fit_fringe(scan)
        assert list(fit.combos) == ['++']


@pytest.mark.unit
class TestStatistics:
    """Scalar estimators."""

    def test_weighted_mean(self):
        mean, std = weighted_mean([1.0, 3.0], [1.0, 1.0])
        assert mean == pytest.approx(2.0)
        assert std == pytest.approx(1 / math.sqrt(2))

    def test_weighted_mean_with_exact_value(self):
        assert weighted_mean([0.5, 0.9], [0.0, 0.1]) == (0.5, 0.0)

    def test_weighted_mean_empty(self):
        with pytest.raises(InsufficientStatisticsError):
            weighted_mean([], [])

    def test_extrema(self):
        assert visibility_from_extrema(1547.0, 63.0) == pytest.approx(0.9217, abs=1e-4)
        with pytest.raises(AnalysisError):
            visibility_from_extrema(0.0, 0.0)

    def test_qber_and_s(self):
        assert qber_from_visibility(0.922) == pytest.approx(0.039)
        assert s_from_visibility(0.922) == pytest.approx(3.688)

    def test_sigma_distance_from_thresholds(self):
        assert sigma_distance(0.922, 0.5, 0.008) > 50
        assert sigma_distance(0.922, 1 / math.sqrt(2), 0.008) > 25
        with pytest.raises(AnalysisError):
            sigma_distance(0.9, 0.5, 0.0)

    def test_bit_rate(self):
        assert bit_rate(1600, 100.0) == pytest.approx(16.0)
        with pytest.raises(AnalysisError):
            bit_rate(1, 0.0)

    def test_qber_from_keys(self):
        q, std = qber_from_keys('0110', '0100')
        assert q == 0.25
        assert std == pytest.approx(math.sqrt(0.25 * 0.75 / 4))

    def test_qber_from_keys_errors(self):
        with pytest.raises(AnalysisError):
            qber_from_keys('01', '0')
        with pytest.raises(InsufficientStatisticsError):
            qber_from_keys('', '')

    def test_key_visibility(self):
        rounds = [(1, 1, 1, 1), (-1, 1, 1, 1), (1, -1, -1, 1), (1, -1, -1, 1)]
        estimate = key_visibility(rounds)
        assert estimate.value == pytest.approx(0.5)
        assert estimate.per_combination['++'][0] == pytest.approx(0.0)
        assert estimate.per_combination['--'] == (1.0, 0.0)

    def test_key_visibility_empty(self):
        with pytest.raises(InsufficientStatisticsError):
            key_visibility([])

    def test_accidental_error_fraction(self):
        assert accidental_error_fraction([True, True, False, True], [True, False, True, False]) == \
            pytest.approx(1 / 3)
        assert accidental_error_fraction([False], [True]) == 0.0


@pytest.mark.unit
class TestBell:
    """Correlation tables and the S3 optimizer."""

    def _rounds(self, v, rng, per_combination=20_000):
        rounds = []
        keys = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        for settings in OPTIMAL_BELL_SETTINGS.combinations():
            table = outcome_distribution(settings, v)
            draws = rng.choice(4, size=per_combination, p=[table[key] for key in keys])
            rounds.extend(MeasuredRound(settings, *keys[d]) for d in draws)
        return rounds

    def test_correlation_from_ports(self):
        value, std = correlation_from_ports([1, 1, -1, -1], [1, 1, -1, 1])
        assert value == pytest.approx(0.5)
        assert std == pytest.approx(math.sqrt(0.75 / 4))
        with pytest.raises(InsufficientStatisticsError):
            correlation_from_ports([], [])

    @pytest.mark.statistical
    def test_estimate_s3(self, rng):
        rounds = self._rounds(0.922, rng)
        table = correlation_table(rounds)
        assert [e.rounds for e in table] == [20_000] * 4
        error = s3_std_error(table)
        assert abs(estimate_s3(rounds) - 3.688) < 3 * error

    def test_missing_combination(self, rng):
        rounds = [r for r in self._rounds(1.0, rng, 10) if r.settings != OPTIMAL_BELL_SETTINGS.combinations()[0]]
        with pytest.raises(InsufficientStatisticsError):
            correlation_table(rounds)

    @pytest.mark.parametrize("v", [1.0, 0.922, 0.5])
    def test_optimizer_finds_four_v(self, v):
        settings, value = optimize_bell_settings(v, restarts=8, rng=np.random.default_rng(3))
        assert value == pytest.approx(4 * v, abs=1e-6)
        assert s3_for_settings(settings, v) == pytest.approx(value, abs=1e-9)


@pytest.mark.unit
class TestRunReport:
    """Aggregated report of a session."""

    def test_report_from_rounds(self):
        rounds = [(1, 1, 1, 1)] * 90 + [(-1, 1, 1, 1)] * 10
        accidental = [False] * 95 + [True] * 5
        report = build_run_report(n_pulses=8_000_000_000, pulse_rate=8.0e7, rounds=rounds,
                                  accidental=accidental, detected_rounds=200,
                                  interference_visibility=0.93)
        assert report.qber == pytest.approx(0.1)
        assert report.visibility.value == pytest.approx(0.8)
        assert report.s_exp == pytest.approx(3.2)
        assert report.bit_rate == pytest.approx(1.0)
        assert report.accidental_error_fraction == pytest.approx(0.5)
        assert report.significance_three_party > 0
        assert not report.insufficient_statistics

    def test_empty_report(self):
        report = build_run_report(n_pulses=1000, pulse_rate=8.0e7, rounds=[], accidental=[],
                                  detected_rounds=0, interference_visibility=1.0)
        assert report.insufficient_statistics
        assert report.qber is None
        data = report.to_dict()
        assert data['visibility'] is None
        assert data['visibility_std'] is None
        assert 'n/a' in report.format_text()

    def test_minimum_bits(self):
        report = build_run_report(n_pulses=1000, pulse_rate=8.0e7, rounds=[(1, 1, 1, 1)] * 5,
                                  accidental=[False] * 5, detected_rounds=5,
                                  interference_visibility=1.0, min_sifted_bits=10)
        assert report.insufficient_statistics
        assert report.qber == 0.0

    def test_report_dict_flattens_visibility(self):
        report = build_run_report(n_pulses=1000, pulse_rate=8.0e7, rounds=[(1, 1, 1, 1), (-1, 1, 1, 1)],
                                  accidental=[False, False], detected_rounds=2, interference_visibility=1.0)
        data = report.to_dict()
        assert data['visibility'] == pytest.approx(0.0)
        assert data['visibility_std'] == pytest.approx(math.sqrt(0.5))
        assert "QBER" in report.format_text()
