#!/usr/bin/env python3
"""
GHZ-Share Source Module

Event-level model of the energy-time pseudo-GHZ source:
- Pump pulse split by Alice's unbalanced interferometer
- Pair creation per pump slot (multi-pair emission excluded by validation)
- Per-arm path amplitudes and arrival-time bins
- Central-peak post-selection
- Monte Carlo sampling of pair events
- Exact enumeration of central-peak masses under interception and jitter

Only the two central-peak histories (l;s,s) and (s;l,l) interfere. Every
other path triple has a unique time-bin signature and is treated as fully
distinguishable.
"""

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .correlations import (
    Phase, PhaseSettings, VisibilityLike, as_visibility, outcome_distribution
)

# Configure logging
logger = logging.getLogger(__name__)

MAX_PAIR_PROBABILITY = 0.01
CENTRAL_SECTOR_MASS = 0.25


class SourceError(Exception):
    """Custom exception for source model operations."""
    pass


class SourceParameterError(SourceError):
    """Exception raised for physically invalid source parameters."""
    pass


class PathChoice(enum.Enum):
    """Short or long arm of an unbalanced interferometer."""
    SHORT = 's'
    LONG = 'l'

    @property
    def delta(self) -> int:
        return 1 if self is PathChoice.LONG else 0

    @classmethod
    def from_delta(cls, delta: int) -> 'PathChoice':
        return cls.LONG if delta else cls.SHORT


@dataclass(frozen=True)
class PathTriple:
    """Arm choices of the pump (Alice), Bob's photon and Charly's photon."""
    alice: PathChoice
    bob: PathChoice
    charly: PathChoice

    @classmethod
    def from_deltas(cls, a: int, b: int, c: int) -> 'PathTriple':
        return cls(PathChoice.from_delta(a), PathChoice.from_delta(b), PathChoice.from_delta(c))

    @property
    def label(self) -> str:
        return f"{self.alice.value};{self.bob.value}{self.charly.value}"


def all_path_triples() -> List[PathTriple]:
    """The eight path triples in (alice, bob, charly) delta order."""
    return [PathTriple.from_deltas(a, b, c) for a, b, c in itertools.product((0, 1), repeat=3)]


CENTRAL_TRIPLES = (
    PathTriple(PathChoice.LONG, PathChoice.SHORT, PathChoice.SHORT),
    PathTriple(PathChoice.SHORT, PathChoice.LONG, PathChoice.LONG),
)


@dataclass(frozen=True)
class TimeBins:
    """
    Time-difference bins in units of the interferometer delay.

    ab: bin of t_B - t_0, ac: bin of t_C - t_0, bc: bin of t_C - t_B.
    """
    ab: int
    ac: int
    bc: int

    def __post_init__(self) -> None:
        if self.bc != self.ac - self.ab:
            raise SourceError(f"Inconsistent time bins: bc={self.bc} != ac-ab={self.ac - self.ab}")


CENTRAL_BINS = TimeBins(1, 1, 0)


@dataclass
class SourceParams:
    """Pump and pair-creation parameters, defaults from the laboratory setup."""
    pulse_rate: float = 8.0e7
    pair_prob_per_slot: float = 6.4e-4
    delay: float = 1.2e-9
    pulse_width: float = 6.0e-10

    @property
    def slot_period(self) -> float:
        return 1.0 / self.pulse_rate

    def problems(self) -> List[str]:
        """Return human-readable invariant violations, empty when valid."""
        issues = []
        if not self.pulse_rate > 0:
            issues.append(f"pulse_rate: must be positive, got {self.pulse_rate}")
        if not self.delay > 0:
            issues.append(f"delay: must be positive, got {self.delay}")
        if not self.pulse_width > 0:
            issues.append(f"pulse_width: must be positive, got {self.pulse_width}")
        elif self.pulse_width >= self.delay:
            issues.append(
                f"pulse_width: pulses not separable (pulse_width {self.pulse_width} s "
                f">= delay {self.delay} s)"
            )
        if not 0.0 <= self.pair_prob_per_slot <= 1.0:
            issues.append(f"pair_prob_per_slot: must be a probability, got {self.pair_prob_per_slot}")
        elif self.pair_prob_per_slot >= MAX_PAIR_PROBABILITY:
            issues.append(
                f"pair_prob_per_slot: multi-pair regime ({self.pair_prob_per_slot} >= "
                f"{MAX_PAIR_PROBABILITY})"
            )
        if self.pulse_rate > 0 and self.delay > 0 and 2.0 * self.delay >= self.slot_period:
            issues.append("delay: late time bins overlap the next pump slot")
        return issues

    def check(self) -> None:
        """
        Raise if any invariant is violated.

        Raises:
            SourceParameterError: With all violations joined
        """
        issues = self.problems()
        if issues:
            raise SourceParameterError("; ".join(issues))


@dataclass(frozen=True)
class TripleEvent:
    """
    One post-selection candidate produced by a pair-creation event.

    paths is None for the coherent central sector, where the two central
    histories are indistinguishable.
    """
    settings: PhaseSettings
    paths: Optional[PathTriple]
    bins: TimeBins
    ports: Tuple[int, int]
    coherent: bool = False
    eve_touched: bool = False
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def alpha_prime(self) -> Phase:
        return self.settings.alice

    @property
    def is_central(self) -> bool:
        return is_central(self.bins)


def amplitude(paths: PathTriple, settings: PhaseSettings) -> complex:
    """
    Per-arm amplitude of a path triple: (1/sqrt 8) exp(i(d_a alpha' + d_b beta + d_c gamma)).

    |amplitude|^2 = 1/8 for every path triple.
    """
    phase = (paths.alice.delta * settings.alice.value
             + paths.bob.delta * settings.bob.value
             + paths.charly.delta * settings.charly.value)
    return complex(np.exp(1j * phase)) / math.sqrt(8.0)


def time_bins(paths: PathTriple) -> TimeBins:
    """Time-difference bins for a path triple."""
    ab = paths.alice.delta + paths.bob.delta
    ac = paths.alice.delta + paths.charly.delta
    return TimeBins(ab=ab, ac=ac, bc=ac - ab)


def is_central(bins: TimeBins) -> bool:
    """True for the central peaks, where the two histories interfere."""
    return bins.ab == 1 and bins.ac == 1


def sector_probabilities() -> Dict[str, float]:
    """
    Probability of each path sector for a created pair.

    The coherent central sector collects both central triples; each
    non-central triple is its own sector.
    """
    sectors = {'central': 0.0}
    for paths in all_path_triples():
        weight = abs(amplitude(paths, PhaseSettings.of(0.0, 0.0, 0.0))) ** 2
        if is_central(time_bins(paths)):
            sectors['central'] += weight
        else:
            sectors[paths.label] = weight
    return sectors


def _uniform_ports(rng: np.random.Generator) -> Tuple[int, int]:
    j, k = rng.integers(0, 2, size=2)
    return (1 - 2 * int(j), 1 - 2 * int(k))


def draw_ports(settings: PhaseSettings, v: VisibilityLike, rng: np.random.Generator) -> Tuple[int, int]:
    """Draw (j, k) from the central-peak port distribution."""
    table = outcome_distribution(settings, v)
    keys = list(table)
    index = rng.choice(len(keys), p=[table[key] for key in keys])
    return keys[int(index)]


def sample_pair_event(settings: PhaseSettings, v: VisibilityLike, params: SourceParams,
                      rng: np.random.Generator) -> Optional[TripleEvent]:
    """
    Sample the pair emitted in one pump slot, if any.

    A created pair falls into the coherent central sector with probability
    1/4 and into each non-central path triple with probability 1/8. Central
    events take their ports from outcome_distribution, all others are
    uniform.

    Returns:
        Optional[TripleEvent]: The event, or None when no pair was created
    """
    vis = as_visibility(v)
    if rng.random() >= params.pair_prob_per_slot:
        return None

    a, b, c = (int(x) for x in rng.integers(0, 2, size=3))
    paths = PathTriple.from_deltas(a, b, c)
    bins = time_bins(paths)
    if is_central(bins):
        return TripleEvent(settings=settings, paths=None, bins=CENTRAL_BINS,
                           ports=draw_ports(settings, vis, rng), coherent=True)
    return TripleEvent(settings=settings, paths=paths, bins=bins, ports=_uniform_ports(rng))


def collapse_target(event: TripleEvent, target: str, rng: np.random.Generator) -> TripleEvent:
    """
    Localize one photon in time and let its resend re-traverse the local interferometer.

    The emission time (the pump path) becomes known, which destroys the
    central-peak coherence; the targeted party's arm is drawn afresh.

    Args:
        event: Event to modify
        target: 'bob' or 'charly'
        rng: Random generator
    """
    if event.paths is None:
        paths = CENTRAL_TRIPLES[int(rng.integers(0, 2))]
    else:
        paths = event.paths
    fresh = PathChoice.from_delta(int(rng.integers(0, 2)))
    if target == 'bob':
        paths = replace(paths, bob=fresh)
    elif target == 'charly':
        paths = replace(paths, charly=fresh)
    else:
        raise SourceError(f"Unknown interception target: {target}")
    return replace(event, paths=paths, bins=time_bins(paths), ports=_uniform_ports(rng),
                   coherent=False, eve_touched=True)


# ============================================================================
# SECTOR ENUMERATION ORACLE
# ============================================================================

@dataclass(frozen=True)
class CentralMass:
    """Probability per created pair of a photon pair measured in the central bins."""
    coherent: float
    incoherent: float

    @property
    def total(self) -> float:
        return self.coherent + self.incoherent

    @property
    def coherent_fraction(self) -> float:
        return self.coherent / self.total if self.total > 0 else 0.0


def _jitter_shifts(jitter_prob: float) -> Iterator[Tuple[int, float]]:
    yield 0, 1.0 - jitter_prob
    if jitter_prob > 0:
        yield -1, jitter_prob / 2.0
        yield 1, jitter_prob / 2.0


def central_mass(interception_prob: float = 0.0, jitter_prob: float = 0.0) -> CentralMass:
    """
    Exact central-peak masses by enumeration.

    Enumerates the eight path triples, interception with redraw of the
    targeted arm, and independent +-1 bin misclassification of both
    photons. A photon pair counts as coherent only when it comes from the
    untouched central sector and neither bin was shifted.

    Args:
        interception_prob: Probability that the eavesdropper localizes the photon
        jitter_prob: Probability that a detection is assigned to a neighbouring bin
    """
    coherent = 0.0
    incoherent = 0.0
    for paths in all_path_triples():
        base = 1.0 / 8.0
        outcomes = [(paths, False, 1.0 - interception_prob)]
        if interception_prob > 0:
            for fresh in (0, 1):
                redrawn = replace(paths, bob=PathChoice.from_delta(fresh))
                outcomes.append((redrawn, True, interception_prob / 2.0))
        for final_paths, touched, weight in outcomes:
            bins = time_bins(final_paths)
            for shift_b, wb in _jitter_shifts(jitter_prob):
                for shift_c, wc in _jitter_shifts(jitter_prob):
                    if bins.ab + shift_b != 1 or bins.ac + shift_c != 1:
                        continue
                    mass = base * weight * wb * wc
                    original_central = is_central(time_bins(paths))
                    if original_central and not touched and shift_b == 0 and shift_c == 0:
                        coherent += mass
                    else:
                        incoherent += mass
    logger.debug(f"Central mass for interception={interception_prob}, jitter={jitter_prob}: "
                 f"coherent={coherent}, incoherent={incoherent}")
    return CentralMass(coherent=coherent, incoherent=incoherent)
