#!/usr/bin/env python3
"""
GHZ-Share Simulation Engine

Compressed, sharded Monte Carlo of pump slots:
- Only slots that can produce a triple coincidence are materialized.
  Pair slots are thinned with the probability that both parties may
  click, and slots without a pair contribute dark-dark coincidences.
  Both steps use binomial/multinomial draws, so the counts follow the
  same distribution as the slot-by-slot pipeline.
- Slots are processed in fixed-size blocks. Each block gets its own seed
  from SeedSequence.spawn, so sequential and threaded execution give
  identical merged results.
- Results are columnar numpy arrays of the central-bin triple
  coincidences, plus counters and time-difference spectra.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import psutil

from .correlations import PhaseSettings
from .devices import DetectorParams
from .source import SourceParams

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_BLOCK_PULSES = 10_000_000_000
NO_BIN = -99
SPECTRUM_RANGES = {'ab': (-1, 3), 'ac': (-1, 3), 'bc': (-4, 4)}
EVE_TARGETS = ('bob', 'charly')

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


class SimulationError(Exception):
    """Custom exception for simulation engine operations."""
    pass


@dataclass
class PhaseArrays:
    """Columnar phases (radians) for many rounds."""
    alpha_prime: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __len__(self) -> int:
        return len(self.alpha_prime)

    @classmethod
    def empty(cls) -> 'PhaseArrays':
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def constant(cls, settings: PhaseSettings, n: int) -> 'PhaseArrays':
        return cls(np.full(n, settings.alice.value), np.full(n, settings.bob.value),
                   np.full(n, settings.charly.value))

    @classmethod
    def concatenate(cls, parts: Sequence['PhaseArrays']) -> 'PhaseArrays':
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.alpha_prime for p in parts]),
                   np.concatenate([p.beta for p in parts]),
                   np.concatenate([p.gamma for p in parts]))

    def take(self, index: np.ndarray) -> 'PhaseArrays':
        return PhaseArrays(self.alpha_prime[index], self.beta[index], self.gamma[index])

    def phase_sum(self) -> np.ndarray:
        return self.alpha_prime + self.beta + self.gamma


SettingsSampler = Callable[[np.random.Generator, int], PhaseArrays]


def constant_sampler(settings: PhaseSettings) -> SettingsSampler:
    """Sampler returning the same settings for every round."""
    def sample(rng: np.random.Generator, n: int) -> PhaseArrays:
        return PhaseArrays.constant(settings, n)
    return sample


@dataclass(frozen=True)
class SimulationModel:
    """Physical model driven by the engine."""
    source: SourceParams
    detectors: DetectorParams
    interference_visibility: float
    interception_prob: float = 0.0
    eve_target: str = 'bob'

    def problems(self) -> List[str]:
        issues = [f"source.{p}" for p in self.source.problems()]
        issues += [f"devices.{p}" for p in self.detectors.problems()]
        if not 0.0 <= self.interference_visibility <= 1.0:
            issues.append(f"interference_visibility: must lie in [0, 1], got {self.interference_visibility}")
        if not 0.0 <= self.interception_prob <= 1.0:
            issues.append(f"interception_prob: must be a probability, got {self.interception_prob}")
        if self.eve_target not in EVE_TARGETS:
            issues.append(f"eve_target: must be one of {EVE_TARGETS}, got {self.eve_target}")
        return issues


@dataclass
class CentralEvents:
    """Columnar record of triple coincidences in the central bins."""
    slot: np.ndarray
    settings: PhaseArrays
    j: np.ndarray
    k: np.ndarray
    dark_bob: np.ndarray
    dark_charly: np.ndarray
    coherent: np.ndarray
    eve_touched: np.ndarray
    origin_central: np.ndarray

    def __len__(self) -> int:
        return len(self.slot)

    @classmethod
    def empty(cls) -> 'CentralEvents':
        return cls(slot=np.zeros(0, dtype=np.int64), settings=PhaseArrays.empty(),
                   j=np.zeros(0, dtype=np.int8), k=np.zeros(0, dtype=np.int8),
                   dark_bob=np.zeros(0, dtype=bool), dark_charly=np.zeros(0, dtype=bool),
                   coherent=np.zeros(0, dtype=bool), eve_touched=np.zeros(0, dtype=bool),
                   origin_central=np.zeros(0, dtype=bool))

    @classmethod
    def concatenate(cls, parts: Sequence['CentralEvents']) -> 'CentralEvents':
        if not parts:
            return cls.empty()
        return cls(
            slot=np.concatenate([p.slot for p in parts]),
            settings=PhaseArrays.concatenate([p.settings for p in parts]),
            j=np.concatenate([p.j for p in parts]),
            k=np.concatenate([p.k for p in parts]),
            dark_bob=np.concatenate([p.dark_bob for p in parts]),
            dark_charly=np.concatenate([p.dark_charly for p in parts]),
            coherent=np.concatenate([p.coherent for p in parts]),
            eve_touched=np.concatenate([p.eve_touched for p in parts]),
            origin_central=np.concatenate([p.origin_central for p in parts]),
        )

    def take(self, index: np.ndarray) -> 'CentralEvents':
        return CentralEvents(
            slot=self.slot[index], settings=self.settings.take(index), j=self.j[index],
            k=self.k[index], dark_bob=self.dark_bob[index], dark_charly=self.dark_charly[index],
            coherent=self.coherent[index], eve_touched=self.eve_touched[index],
            origin_central=self.origin_central[index],
        )

    @property
    def accidental(self) -> np.ndarray:
        return self.dark_bob | self.dark_charly

    def port_counts(self) -> Dict[Tuple[int, int], int]:
        """Number of events per (j, k) detector combination."""
        return {
            (j, k): int(np.count_nonzero((self.j == j) & (self.k == k)))
            for j in (1, -1) for k in (1, -1)
        }


def _empty_spectra() -> Dict[str, np.ndarray]:
    return {name: np.zeros(hi - lo + 1, dtype=np.int64) for name, (lo, hi) in SPECTRUM_RANGES.items()}


@dataclass
class BlockResult:
    """Counters and central events of one or more blocks of pump slots."""
    n_slots: int = 0
    pair_slots: int = 0
    candidates: int = 0
    singles_bob: int = 0
    singles_charly: int = 0
    triples_any: int = 0
    accidental_triples_any: int = 0
    spectra: Dict[str, np.ndarray] = field(default_factory=_empty_spectra)
    events: CentralEvents = field(default_factory=CentralEvents.empty)

    @property
    def triples_central(self) -> int:
        return len(self.events)

    def counters(self) -> Dict[str, int]:
        """All count-valued outputs, for comparisons across execution modes."""
        result = {f.name: getattr(self, f.name) for f in fields(self)
                  if f.name not in ('spectra', 'events')}
        result['triples_central'] = self.triples_central
        return result


def merge_blocks(results: Sequence[BlockResult]) -> BlockResult:
    """Order-preserving merge; counters add, event columns concatenate."""
    merged = BlockResult()
    for result in results:
        merged.n_slots += result.n_slots
        merged.pair_slots += result.pair_slots
        merged.candidates += result.candidates
        merged.singles_bob += result.singles_bob
        merged.singles_charly += result.singles_charly
        merged.triples_any += result.triples_any
        merged.accidental_triples_any += result.accidental_triples_any
        for name in merged.spectra:
            merged.spectra[name] = merged.spectra[name] + result.spectra[name]
    merged.events = CentralEvents.concatenate([r.events for r in results])
    return merged


def _signs(rng: np.random.Generator, n: int) -> np.ndarray:
    return (1 - 2 * rng.integers(0, 2, size=n)).astype(np.int8)


def _dark_bins(rng: np.random.Generator, n: int, detectors: DetectorParams) -> np.ndarray:
    u = rng.random(n)
    g = detectors.dark_bin_prob
    in_peak = u < 3.0 * g
    bins = np.minimum(np.floor(u / g), 2).astype(np.int64)
    return np.where(in_peak, bins, NO_BIN)


def _detect_candidates(rng: np.random.Generator, ports: np.ndarray, photon_bins: np.ndarray,
                       detectors: DetectorParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Resolve detection for slots in which the party may click.

    Conditioned on (photon draw < max efficiency) or (dark draw < dark
    probability), the three cases are drawn with their exact conditional
    weights; the photon then clicks with the efficiency of its port.
    """
    n = len(ports)
    eta_max = detectors.max_efficiency
    d = detectors.dark_prob_per_gate
    u = 1.0 - (1.0 - eta_max) * (1.0 - d)
    case = rng.choice(3, size=n, p=[eta_max * (1.0 - d) / u, (1.0 - eta_max) * d / u, eta_max * d / u])
    may_photon = case != 1
    may_dark = case != 0

    efficiency = np.where(ports == 1, detectors.efficiency_for(1), detectors.efficiency_for(-1))
    photon = may_photon & (rng.random(n) * eta_max < efficiency)

    jittered = rng.random(n) < detectors.bin_jitter_prob
    shift = np.where(rng.random(n) < 0.5, 1, -1)
    measured_bins = photon_bins + np.where(jittered, shift, 0)

    dark = may_dark & ~photon
    dark_ports = _signs(rng, n)
    dark_bins = _dark_bins(rng, n, detectors)

    clicks = photon | dark
    out_ports = np.where(photon, ports, dark_ports).astype(np.int8)
    out_bins = np.where(photon, measured_bins, np.where(dark, dark_bins, NO_BIN))
    return clicks, out_ports, out_bins, dark


def _accumulate_spectra(spectra: Dict[str, np.ndarray], bins_b: np.ndarray, bins_c: np.ndarray) -> None:
    valid = (bins_b != NO_BIN) & (bins_c != NO_BIN)
    values = {'ab': bins_b[valid], 'ac': bins_c[valid], 'bc': bins_c[valid] - bins_b[valid]}
    for name, (lo, hi) in SPECTRUM_RANGES.items():
        spectra[name] += np.bincount(values[name] - lo, minlength=hi - lo + 1)[: hi - lo + 1]


def simulate_block(n_slots: int, rng: np.random.Generator, model: SimulationModel,
                   sampler: SettingsSampler, slot_offset: int = 0) -> BlockResult:
    """
    Simulate one block of pump slots.

    Args:
        n_slots: Number of pump slots in the block
        rng: Generator owned by this block
        model: Physical model
        sampler: Phase settings per round
        slot_offset: Index of the first slot of the block

    Returns:
        BlockResult: Counters, spectra and central events of the block
    """
    source, detectors = model.source, model.detectors
    p = source.pair_prob_per_slot
    d = detectors.dark_prob_per_gate
    eta_max = detectors.max_efficiency
    u = 1.0 - (1.0 - eta_max) * (1.0 - d)
    result = BlockResult(n_slots=n_slots)

    pair_slots = int(rng.binomial(n_slots, p))
    result.pair_slots = pair_slots
    both, bob_only, charly_only, _ = (int(x) for x in rng.multinomial(
        pair_slots, [u * u, u * (1.0 - u), (1.0 - u) * u, (1.0 - u) ** 2]))
    result.candidates = both

    if u > 0:
        click_given_may = (1.0 - (1.0 - detectors.mean_efficiency) * (1.0 - d)) / u
        result.singles_bob += int(rng.binomial(bob_only, min(click_given_may, 1.0)))
        result.singles_charly += int(rng.binomial(charly_only, min(click_given_may, 1.0)))

    parts: List[CentralEvents] = []

    # Pair slots in which both parties may click.
    m = both
    settings = sampler(rng, m)
    if len(settings) != m:
        raise SimulationError(f"Settings sampler returned {len(settings)} rounds, expected {m}")
    a = rng.integers(0, 2, size=m)
    b = rng.integers(0, 2, size=m)
    c = rng.integers(0, 2, size=m)
    central = (a != b) & (b == c)

    touched = rng.random(m) < model.interception_prob
    fresh = rng.integers(0, 2, size=m)
    if model.eve_target == 'bob':
        b = np.where(touched, fresh, b)
    else:
        c = np.where(touched, fresh, c)
    coherent = central & ~touched

    j = _signs(rng, m)
    correlated = rng.random(m) < 0.5 * (1.0 + model.interference_visibility * np.cos(settings.phase_sum()))
    k_coherent = np.where(correlated, j, -j)
    k = np.where(coherent, k_coherent, _signs(rng, m)).astype(np.int8)

    if m:
        clicks_b, ports_b, bins_b, dark_b = _detect_candidates(rng, j, a + b, detectors)
        clicks_c, ports_c, bins_c, dark_c = _detect_candidates(rng, k, a + c, detectors)
        result.singles_bob += int(np.count_nonzero(clicks_b))
        result.singles_charly += int(np.count_nonzero(clicks_c))
        triple = clicks_b & clicks_c
        result.triples_any += int(np.count_nonzero(triple))
        result.accidental_triples_any += int(np.count_nonzero(triple & (dark_b | dark_c)))
        _accumulate_spectra(result.spectra, bins_b[triple], bins_c[triple])
        keep = triple & (bins_b == 1) & (bins_c == 1)
        index = np.flatnonzero(keep)
        parts.append(CentralEvents(
            slot=np.zeros(len(index), dtype=np.int64), settings=settings.take(index),
            j=ports_b[index], k=ports_c[index], dark_bob=dark_b[index], dark_charly=dark_c[index],
            coherent=coherent[index] & ~dark_b[index] & ~dark_c[index],
            eve_touched=touched[index], origin_central=central[index],
        ))

    # Slots without a pair: dark counts only.
    no_pair = n_slots - pair_slots
    dark_both, dark_bob_only, dark_charly_only, _ = (int(x) for x in rng.multinomial(
        no_pair, [d * d, d * (1.0 - d), (1.0 - d) * d, (1.0 - d) ** 2]))
    result.singles_bob += dark_both + dark_bob_only
    result.singles_charly += dark_both + dark_charly_only
    result.triples_any += dark_both
    result.accidental_triples_any += dark_both
    if dark_both:
        dark_settings = sampler(rng, dark_both)
        bins_b = _dark_bins(rng, dark_both, detectors)
        bins_c = _dark_bins(rng, dark_both, detectors)
        ports_b = _signs(rng, dark_both)
        ports_c = _signs(rng, dark_both)
        _accumulate_spectra(result.spectra, bins_b, bins_c)
        index = np.flatnonzero((bins_b == 1) & (bins_c == 1))
        ones = np.ones(len(index), dtype=bool)
        parts.append(CentralEvents(
            slot=np.zeros(len(index), dtype=np.int64), settings=dark_settings.take(index),
            j=ports_b[index], k=ports_c[index], dark_bob=ones, dark_charly=ones.copy(),
            coherent=~ones, eve_touched=~ones, origin_central=~ones,
        ))

    events = CentralEvents.concatenate(parts)
    count = len(events)
    if count:
        order = rng.permutation(count)
        slots = np.sort(rng.choice(n_slots, size=count, replace=False)).astype(np.int64)
        events = events.take(order)
        events.slot = slots + slot_offset
    result.events = events
    return result


def default_workers() -> int:
    """Physical core count, falling back to one worker."""
    return psutil.cpu_count(logical=False) or 1


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """Derive a SeedSequence from an integer, SeedSequence or Generator."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2 ** 63)))
    return np.random.SeedSequence(int(seed))


@dataclass
class SimulationStats:
    """Statistics for a sharded simulation run."""
    blocks_total: int = 0
    blocks_completed: int = 0
    slots_simulated: int = 0
    candidates: int = 0
    workers: int = 1
    start_time: Optional[datetime] = None
    end_time: Optional[datetime] = None


class ShardedSimulator:
    """
    Runs a simulation model over many pump slots in deterministic blocks.

    Block boundaries and block seeds depend only on the slot count, the
    block size and the seed, never on the worker count.
    """

    def __init__(self,
                 model: SimulationModel,
                 sampler: SettingsSampler,
                 block_pulses: int = DEFAULT_BLOCK_PULSES,
                 workers: Optional[int] = 1):
        """
        Initialize the ShardedSimulator.

        Args:
            model: Physical model to simulate
            sampler: Phase settings per round
            block_pulses: Pump slots per block
            workers: Thread count; None picks the physical core count

        Raises:
            SimulationError: If the model or block size is invalid
        """
        issues = model.problems()
        if issues:
            raise SimulationError("Invalid simulation model: " + "; ".join(issues))
        if block_pulses < 1:
            raise SimulationError(f"block_pulses must be positive, got {block_pulses}")

        self.model = model
        self.sampler = sampler
        self.block_pulses = int(block_pulses)
        self.workers = default_workers() if workers is None else max(1, int(workers))

        self._stats = SimulationStats(workers=self.workers)
        self._lock = threading.Lock()

        logger.debug(f"Initialized ShardedSimulator with {self.block_pulses} slots per block, "
                     f"{self.workers} worker(s)")

    def plan_blocks(self, n_pulses: int) -> List[Tuple[int, int]]:
        """Split n_pulses into (offset, size) blocks."""
        if n_pulses < 1:
            raise SimulationError(f"n_pulses must be at least 1, got {n_pulses}")
        return [(offset, min(self.block_pulses, n_pulses - offset))
                for offset in range(0, n_pulses, self.block_pulses)]

    def run(self, n_pulses: int, seed: SeedLike) -> BlockResult:
        """
        Simulate n_pulses pump slots.

        Returns:
            BlockResult: Merged result in block order
        """
        blocks = self.plan_blocks(int(n_pulses))
        seeds = seed_sequence(seed).spawn(len(blocks))

        with self._lock:
            self._stats = SimulationStats(blocks_total=len(blocks), workers=self.workers,
                                          start_time=datetime.now())

        logger.info(f"Simulating {n_pulses} pump slots in {len(blocks)} block(s) "
                    f"on {self.workers} worker(s)")

        def run_block(index: int) -> BlockResult:
            offset, size = blocks[index]
            result = simulate_block(size, np.random.default_rng(seeds[index]), self.model,
                                    self.sampler, slot_offset=offset)
            with self._lock:
                self._stats.blocks_completed += 1
                self._stats.slots_simulated += size
                self._stats.candidates += result.candidates
            logger.debug(f"Block {index} done: {result.candidates} candidates, "
                         f"{result.triples_central} central triples")
            return result

        try:
            if self.workers == 1 or len(blocks) == 1:
                results = [run_block(i) for i in range(len(blocks))]
            else:
                with ThreadPoolExecutor(max_workers=self.workers) as executor:
                    results = list(executor.map(run_block, range(len(blocks))))
        except SimulationError:
            raise
        except Exception as e:
            logger.error(f"Simulation failed: {e}")
            raise SimulationError(f"Simulation failed: {e}")

        merged = merge_blocks(results)
        with self._lock:
            self._stats.end_time = datetime.now()
        logger.info(f"Simulation finished: {merged.triples_central} central triples, "
                    f"{merged.triples_any} triples in total")
        return merged

    def get_stats(self) -> Dict[str, Any]:
        """
        Get simulation statistics as a dictionary.

        Returns:
            Dict[str, Any]: Simulation statistics
        """
        with self._lock:
            stats = self._stats
            elapsed = 0.0
            if stats.start_time and stats.end_time:
                elapsed = (stats.end_time - stats.start_time).total_seconds()
            return {
                'blocks_total': stats.blocks_total,
                'blocks_completed': stats.blocks_completed,
                'slots_simulated': stats.slots_simulated,
                'candidates': stats.candidates,
                'workers': stats.workers,
                'elapsed_seconds': elapsed,
            }
