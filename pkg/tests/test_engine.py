"""
Tests for the sharded, compressed simulation engine.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from ghzshare.correlations import PhaseSettings
from ghzshare.devices import DetectorParams, expected_coincidence_rates
from ghzshare.engine import (
    BlockResult,
    CentralEvents,
    PhaseArrays,
    ShardedSimulator,
    SimulationError,
    SimulationModel,
    constant_sampler,
    default_workers,
    merge_blocks,
    seed_sequence,
    simulate_block,
)
from ghzshare.protocol import sample_round_phases


@pytest.fixture
def lab_model(lab_source, lab_detectors):
    return SimulationModel(source=lab_source, detectors=lab_detectors, interference_visibility=0.9275)


def _assert_same_events(a: CentralEvents, b: CentralEvents) -> None:
    assert len(a) == len(b)
    for name in ('slot', 'j', 'k', 'dark_bob', 'dark_charly', 'coherent', 'eve_touched', 'origin_central'):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    np.testing.assert_array_equal(a.settings.alpha_prime, b.settings.alpha_prime)
    np.testing.assert_array_equal(a.settings.beta, b.settings.beta)
    np.testing.assert_array_equal(a.settings.gamma, b.settings.gamma)


@pytest.mark.unit
class TestColumns:
    """Test the columnar containers."""

    def test_constant_phases(self):
        arrays = PhaseArrays.constant(PhaseSettings.of(0.1, 0.2, 0.3), 4)
        assert len(arrays) == 4
        np.testing.assert_allclose(arrays.phase_sum(), 0.6)

    def test_empty_concatenation(self):
        assert len(PhaseArrays.concatenate([])) == 0
        assert len(CentralEvents.concatenate([])) == 0

    def test_port_counts(self):
        events = CentralEvents(
            slot=np.arange(3), settings=PhaseArrays.constant(PhaseSettings.of(0, 0, 0), 3),
            j=np.array([1, 1, -1], dtype=np.int8), k=np.array([1, -1, -1], dtype=np.int8),
            dark_bob=np.array([False, True, False]), dark_charly=np.zeros(3, dtype=bool),
            coherent=np.ones(3, dtype=bool), eve_touched=np.zeros(3, dtype=bool),
            origin_central=np.ones(3, dtype=bool),
        )
        assert events.port_counts() == {(1, 1): 1, (1, -1): 1, (-1, 1): 0, (-1, -1): 1}
        np.testing.assert_array_equal(events.accidental, [False, True, False])

    def test_counters_include_central(self):
        result = BlockResult(n_slots=10, triples_any=2)
        counters = result.counters()
        assert counters['n_slots'] == 10
        assert counters['triples_central'] == 0
        assert 'events' not in counters

    def test_merge_adds_counters(self):
        merged = merge_blocks([BlockResult(n_slots=5, candidates=1), BlockResult(n_slots=7, candidates=2)])
        assert merged.n_slots == 12
        assert merged.candidates == 3


@pytest.mark.unit
class TestModelValidation:
    """Test SimulationModel and simulator argument checks."""

    def test_invalid_model_rejected(self, lab_source, lab_detectors):
        model = SimulationModel(source=lab_source, detectors=lab_detectors, interference_visibility=1.5)
        with pytest.raises(SimulationError):
            ShardedSimulator(model, sample_round_phases)

    def test_unknown_target(self, lab_source, lab_detectors):
        model = SimulationModel(source=lab_source, detectors=lab_detectors, interference_visibility=1.0,
                                eve_target='alice')
        assert any("eve_target" in issue for issue in model.problems())

    def test_block_size_must_be_positive(self, lab_model):
        with pytest.raises(SimulationError):
            ShardedSimulator(lab_model, sample_round_phases, block_pulses=0)

    def test_plan_blocks(self, lab_model):
        simulator = ShardedSimulator(lab_model, sample_round_phases, block_pulses=4)
        assert simulator.plan_blocks(10) == [(0, 4), (4, 4), (8, 2)]
        with pytest.raises(SimulationError):
            simulator.plan_blocks(0)

    def test_sampler_length_checked(self, lab_model):
        def broken(rng, n):
            return PhaseArrays.constant(PhaseSettings.of(0, 0, 0), n + 1)
        simulator = ShardedSimulator(lab_model, broken)
        with pytest.raises(SimulationError):
            simulator.run(100_000_000, seed=1)

    def test_default_workers(self):
        with patch('ghzshare.engine.psutil.cpu_count', return_value=None):
            assert default_workers() == 1
        with patch('ghzshare.engine.psutil.cpu_count', return_value=6):
            assert default_workers() == 6

    def test_seed_sequence_from_int_and_generator(self):
        assert seed_sequence(5).entropy == 5
        sequence = np.random.SeedSequence(9)
        assert seed_sequence(sequence) is sequence
        a = seed_sequence(np.random.default_rng(3))
        b = seed_sequence(np.random.default_rng(3))
        assert a.entropy == b.entropy


@pytest.mark.unit
class TestDeterminism:
    """Identical seeds give identical results regardless of threading."""

    def test_same_seed_same_result(self, lab_model):
        simulator = ShardedSimulator(lab_model, sample_round_phases, block_pulses=2_000_000_000)
        a = simulator.run(6_000_000_000, seed=42)
        b = simulator.run(6_000_000_000, seed=42)
        assert a.counters() == b.counters()
        _assert_same_events(a.events, b.events)

    def test_sharded_equals_sequential(self, lab_model):
        sequential = ShardedSimulator(lab_model, sample_round_phases, block_pulses=1_000_000_000, workers=1)
        threaded = ShardedSimulator(lab_model, sample_round_phases, block_pulses=1_000_000_000, workers=4)
        a = sequential.run(5_000_000_000, seed=3)
        b = threaded.run(5_000_000_000, seed=3)
        assert a.counters() == b.counters()
        for name in a.spectra:
            np.testing.assert_array_equal(a.spectra[name], b.spectra[name])
        _assert_same_events(a.events, b.events)
        assert threaded.get_stats()['blocks_completed'] == 5

    def test_events_sorted_by_slot(self, lab_model):
        result = ShardedSimulator(lab_model, sample_round_phases, block_pulses=1_000_000_000).run(
            3_000_000_000, seed=8)
        slots = result.events.slot
        assert np.all(np.diff(slots) > 0)
        assert slots.max() < 3_000_000_000

    def test_different_seeds_differ(self, lab_model):
        simulator = ShardedSimulator(lab_model, sample_round_phases)
        assert simulator.run(2_000_000_000, seed=1).counters() != simulator.run(2_000_000_000, seed=2).counters()


@pytest.mark.statistical
class TestThinningStatistics:
    """Compressed counts against the analytic rate model."""

    def test_central_rate_matches_model(self, lab_source, lab_detectors, lab_model):
        n = 20_000_000_000
        result = ShardedSimulator(lab_model, sample_round_phases).run(n, seed=17)
        expected = n * expected_coincidence_rates(lab_source, lab_detectors).central
        assert abs(result.triples_central - expected) < 3 * math.sqrt(expected)

    def test_accidental_share_matches_model(self, lab_source, lab_detectors, lab_model):
        n = 40_000_000_000
        result = ShardedSimulator(lab_model, sample_round_phases).run(n, seed=18)
        rates = expected_coincidence_rates(lab_source, lab_detectors)
        expected = n * rates.accidental
        observed = int(np.count_nonzero(result.events.accidental))
        assert abs(observed - expected) < 3 * math.sqrt(expected)

    def test_spectra_show_three_peaks(self, lab_model):
        result = ShardedSimulator(lab_model, sample_round_phases).run(8_000_000_000, seed=19)
        ab = result.spectra['ab']
        # bins -1..3 with the peak bins 0, 1, 2 in the middle; the central peak is doubled
        peaks = ab[1:4]
        assert ab[0] == 0 and ab[4] == 0
        assert peaks[1] > peaks[0] and peaks[1] > peaks[2]
        bc = result.spectra['bc']
        assert bc.sum() == ab.sum()

    def test_ideal_coherent_ports(self, lab_source):
        model = SimulationModel(source=lab_source, detectors=DetectorParams(efficiency=1.0, dark_rate=0.0),
                                interference_visibility=1.0)
        settings = PhaseSettings.of(0, 0, 0)
        rng = np.random.default_rng(4)
        result = simulate_block(10_000_000, rng, model, constant_sampler(settings))
        events = result.events
        assert len(events) > 0
        assert np.all(events.coherent)
        np.testing.assert_array_equal(events.j, events.k)
        assert not np.any(events.accidental)

    def test_full_interception_removes_coherence(self, lab_source):
        model = SimulationModel(source=lab_source, detectors=DetectorParams(efficiency=1.0, dark_rate=0.0),
                                interference_visibility=1.0, interception_prob=1.0)
        result = simulate_block(10_000_000, np.random.default_rng(5), model, sample_round_phases)
        assert len(result.events) > 0
        assert not np.any(result.events.coherent)
        assert np.all(result.events.eve_touched)

    def test_dark_only_bins(self, lab_source):
        model = SimulationModel(source=lab_source, detectors=DetectorParams(efficiency=0.0, dark_rate=4.0e6),
                                interference_visibility=1.0)
        result = simulate_block(100_000_000, np.random.default_rng(6), model, sample_round_phases)
        assert np.all(result.events.accidental)
        assert result.spectra["ab"][0] == 0 and result.spectra["ab"][4] == 0
        assert result.spectra["ab"].sum() <= result.triples_any
