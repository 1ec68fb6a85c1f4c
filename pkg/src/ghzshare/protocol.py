#!/usr/bin/env python3
"""
GHZ-Share Protocol Module

The three-party secret-sharing protocol:
- Per-round random phase choices and Alice's four-phase mapping onto a
  public basis and a private bit
- Public announcements, sifting on phase sums 0 or pi, and Alice's bit
  reconstructed by Bob and Charly together as i = j k l
- Key assembly with '-1' identified as bit value '0'
- Time-basis intercept-resend eavesdropping
- Sessions driven either by the compressed engine or slot by slot
"""

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import RunReport, build_run_report
from .correlations import Phase, PhaseSettings, VisibilityLike, as_visibility
from .devices import (
    CalibrationError, ClickCause, CoincidenceGate, DetectorParams, Party,
    calibrate_interference_visibility, detect, expected_coincidence_rates
)
from .engine import (
    DEFAULT_BLOCK_PULSES, BlockResult, CentralEvents, PhaseArrays, SeedLike,
    ShardedSimulator, SimulationModel, seed_sequence
)
from .source import SourceParams, TripleEvent, collapse_target, sample_pair_event

# Configure logging
logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2
ALICE_PHASES = (0.0, HALF_PI, math.pi, 3 * HALF_PI)
BOB_PHASES = (3 * HALF_PI, 0.0)
CHARLY_PHASES = (HALF_PI, 3 * HALF_PI)


class ProtocolError(Exception):
    """Custom exception for protocol operations."""
    pass


class RoundNotDetectedError(ProtocolError):
    """Exception raised when sifting a round without a triple coincidence."""
    pass


class EveConfigError(ProtocolError):
    """Exception raised for an invalid eavesdropper configuration."""
    pass


@dataclass(frozen=True)
class AliceChoice:
    """
    Alice's encoding phase alpha' split into a public basis and a private bit.

    alpha' = basis + pi (1 - bit_i) / 2 (mod 2 pi).
    """
    alpha_prime: Phase
    basis: Phase
    bit_i: int

    def __post_init__(self) -> None:
        if self.bit_i not in (1, -1):
            raise ProtocolError(f"Alice's bit must be +1 or -1, got {self.bit_i}")
        if self.basis not in (Phase(0.0), Phase(HALF_PI)):
            raise ProtocolError(f"Alice's basis must be 0 or pi/2, got {self.basis.value}")
        if self.alpha_prime != self.basis + math.pi * (1 - self.bit_i) / 2:
            raise ProtocolError("alpha' does not match basis and bit")

    @classmethod
    def from_alpha_prime(cls, alpha_prime: Phase) -> 'AliceChoice':
        """Four-phase mapping: 0 -> (0, +1), pi/2 -> (pi/2, +1), pi -> (0, -1), 3pi/2 -> (pi/2, -1)."""
        for index, value in enumerate(ALICE_PHASES):
            if alpha_prime == Phase(value):
                basis = Phase(ALICE_PHASES[index % 2])
                return cls(alpha_prime=Phase(value), basis=basis, bit_i=1 if index < 2 else -1)
        raise ProtocolError(f"alpha' must be a multiple of pi/2, got {alpha_prime.value}")

    @classmethod
    def from_basis_bit(cls, basis: Phase, bit_i: int) -> 'AliceChoice':
        return cls(alpha_prime=basis + math.pi * (1 - bit_i) / 2, basis=basis, bit_i=bit_i)


@dataclass(frozen=True)
class PartyChoice:
    """Phase of Bob's or Charly's interferometer and the detector that clicked."""
    phase: Phase
    outcome: Optional[int] = None
    cause: Optional[ClickCause] = None

    allowed = ()

    def __post_init__(self) -> None:
        if self.allowed and not any(self.phase == Phase(v) for v in self.allowed):
            raise ProtocolError(f"{type(self).__name__} phase {self.phase.value} not in the allowed set")
        if self.outcome is not None and self.outcome not in (1, -1):
            raise ProtocolError(f"Outcome must be +1 or -1, got {self.outcome}")

    def with_click(self, outcome: int, cause: ClickCause) -> 'PartyChoice':
        return type(self)(phase=self.phase, outcome=outcome, cause=cause)


@dataclass(frozen=True)
class BobChoice(PartyChoice):
    allowed = BOB_PHASES


@dataclass(frozen=True)
class CharlyChoice(PartyChoice):
    allowed = CHARLY_PHASES


@dataclass(frozen=True)
class RoundRecord:
    """Protocol record of one pump slot."""
    slot: int
    alice: AliceChoice
    bob: BobChoice
    charly: CharlyChoice
    detected: bool
    eve_touched: bool = False

    def __post_init__(self) -> None:
        has_outcomes = self.bob.outcome is not None and self.charly.outcome is not None
        if self.detected != has_outcomes:
            raise ProtocolError(f"Round {self.slot}: outcomes must be present iff detected")

    @property
    def settings(self) -> PhaseSettings:
        return PhaseSettings(self.alice.alpha_prime, self.bob.phase, self.charly.phase)

    @property
    def j(self) -> Optional[int]:
        return self.bob.outcome

    @property
    def k(self) -> Optional[int]:
        return self.charly.outcome

    @property
    def accidental(self) -> bool:
        return ClickCause.DARK in (self.bob.cause, self.charly.cause)


@dataclass(frozen=True)
class Announcement:
    """Public part of a round: basis phases and the detection flag."""
    slot: int
    alpha_basis: Phase
    beta: Phase
    gamma: Phase
    detected: bool


@dataclass(frozen=True)
class SiftedBit:
    """Key material of one sifted round."""
    l: int
    alice_bit: int
    bob_bit: int
    charly_bit: int
    slot: int = 0
    accidental: bool = False

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.alice_bit, self.bob_bit, self.charly_bit, self.l)


class EveStrategy(enum.Enum):
    NONE = 'none'
    TIME_BASIS_INTERCEPT = 'time_basis_intercept'


class EveTarget(enum.Enum):
    BOB_CHANNEL = 'bob_channel'
    CHARLY_CHANNEL = 'charly_channel'

    @property
    def party(self) -> str:
        return 'bob' if self is EveTarget.BOB_CHANNEL else 'charly'


@dataclass(frozen=True)
class EveConfig:
    strategy: EveStrategy = EveStrategy.NONE
    interception_prob: float = 0.0
    target: EveTarget = EveTarget.BOB_CHANNEL

    @property
    def effective_prob(self) -> float:
        return self.interception_prob if self.strategy is EveStrategy.TIME_BASIS_INTERCEPT else 0.0

    def problems(self) -> List[str]:
        if not 0.0 <= self.interception_prob <= 1.0:
            return [f"interception_prob: must be a probability, got {self.interception_prob}"]
        return []

    def check(self) -> None:
        issues = self.problems()
        if issues:
            raise EveConfigError("; ".join(issues))


NO_EVE = EveConfig()


def choose_round_settings(rng: np.random.Generator) -> Tuple[AliceChoice, BobChoice, CharlyChoice]:
    """Independent uniform choices: four alpha' values for Alice, two phases each for Bob and Charly."""
    a, b, c = (int(x) for x in rng.integers(0, (4, 2, 2)))
    return (AliceChoice.from_alpha_prime(Phase(ALICE_PHASES[a])),
            BobChoice(Phase(BOB_PHASES[b])),
            CharlyChoice(Phase(CHARLY_PHASES[c])))


def sample_round_phases(rng: np.random.Generator, n: int) -> PhaseArrays:
    """Vectorized choose_round_settings for the session engine."""
    a = rng.integers(0, 4, size=n)
    b = rng.integers(0, 2, size=n)
    c = rng.integers(0, 2, size=n)
    return PhaseArrays(np.asarray(ALICE_PHASES)[a], np.asarray(BOB_PHASES)[b],
                       np.asarray(CHARLY_PHASES)[c])


def announce(record: RoundRecord) -> Announcement:
    """Public announcement of a round; never contains i, j or k."""
    return Announcement(slot=record.slot, alpha_basis=record.alice.basis,
                        beta=record.bob.phase, gamma=record.charly.phase, detected=record.detected)


def basis_sum_sign(announcement: Announcement) -> Optional[int]:
    """l = +1 for basis sum 0, -1 for pi, None otherwise."""
    total = announcement.alpha_basis + announcement.beta + announcement.gamma
    if total == Phase(0.0):
        return 1
    if total == Phase(math.pi):
        return -1
    return None


def sift(record: RoundRecord) -> Optional[SiftedBit]:
    """
    Keep a detected round iff its announced basis sum is 0 or pi.

    Raises:
        RoundNotDetectedError: If the round had no triple coincidence
    """
    if not record.detected:
        raise RoundNotDetectedError(f"Round {record.slot} was not detected")
    l = basis_sum_sign(announce(record))
    if l is None:
        return None
    return SiftedBit(l=l, alice_bit=record.alice.bit_i, bob_bit=record.bob.outcome,  # type: ignore[arg-type]
                     charly_bit=record.charly.outcome, slot=record.slot,  # type: ignore[arg-type]
                     accidental=record.accidental)


def reconstruct_alice_bit(bit: SiftedBit) -> int:
    """Bob and Charly together: i = j k l."""
    return bit.bob_bit * bit.charly_bit * bit.l


def apply_eve(event: Optional[TripleEvent], eve: EveConfig,
              rng: np.random.Generator) -> Optional[TripleEvent]:
    """
    Time-basis intercept-resend on the targeted channel.

    With probability interception_prob the photon is localized and resent;
    the resend re-traverses the local interferometer and loses the
    phase-dependent port correlations.
    """
    if event is None or eve.strategy is EveStrategy.NONE:
        return event
    if rng.random() < eve.interception_prob:
        return collapse_target(event, eve.target.party, rng)
    return event


def to_bit(sign: int) -> str:
    """'-1' is bit value '0', '+1' is '1'."""
    return '1' if sign == 1 else '0'


@dataclass(frozen=True)
class SessionKeys:
    """Bit strings over the sifted rounds."""
    alice: str
    bob: str
    charly: str
    joint: str

    @classmethod
    def from_sifted(cls, bits: Sequence[SiftedBit]) -> 'SessionKeys':
        return cls(
            alice=''.join(to_bit(b.alice_bit) for b in bits),
            bob=''.join(to_bit(b.bob_bit) for b in bits),
            charly=''.join(to_bit(b.charly_bit) for b in bits),
            joint=''.join(to_bit(reconstruct_alice_bit(b)) for b in bits),
        )


@dataclass
class SessionResult:
    transcript: List[RoundRecord]
    sifted: List[SiftedBit]
    keys: SessionKeys
    report: RunReport
    interference_visibility: float
    spectra: Dict[str, np.ndarray] = field(default_factory=dict)
    counters: Dict[str, int] = field(default_factory=dict)
    stats: Dict[str, float] = field(default_factory=dict)
    events: Optional[CentralEvents] = None


def interference_visibility_for(v: VisibilityLike, source: SourceParams, det: DetectorParams,
                                calibrate: bool = True) -> float:
    """Interference visibility reproducing observed visibility v under the configured noise."""
    target = as_visibility(v).value
    if not calibrate:
        return target
    try:
        return calibrate_interference_visibility(target, source, det)
    except CalibrationError as e:
        logger.warning(f"{e}; using interference visibility 1")
        return 1.0


def records_from_events(events: CentralEvents) -> List[RoundRecord]:
    """Detected rounds from engine output, in slot order."""
    records = []
    for n in range(len(events)):
        bob_cause = ClickCause.DARK if events.dark_bob[n] else ClickCause.PHOTON
        charly_cause = ClickCause.DARK if events.dark_charly[n] else ClickCause.PHOTON
        records.append(RoundRecord(
            slot=int(events.slot[n]),
            alice=AliceChoice.from_alpha_prime(Phase(float(events.settings.alpha_prime[n]))),
            bob=BobChoice(Phase(float(events.settings.beta[n])), int(events.j[n]), bob_cause),
            charly=CharlyChoice(Phase(float(events.settings.gamma[n])), int(events.k[n]), charly_cause),
            detected=True,
            eve_touched=bool(events.eve_touched[n]),
        ))
    return records


def run_slot_level(n_pulses: int, source: SourceParams, det: DetectorParams,
                   interference_visibility: float, eve: EveConfig,
                   rng: np.random.Generator) -> List[RoundRecord]:
    """
    Reference pipeline, one pump slot at a time.

    sample_pair_event -> apply_eve -> detect at Bob and Charly -> gate.
    Every slot produces a record.
    """
    gate = CoincidenceGate()
    records = []
    for slot in range(n_pulses):
        alice, bob, charly = choose_round_settings(rng)
        settings = PhaseSettings(alice.alpha_prime, bob.phase, charly.phase)
        event = apply_eve(sample_pair_event(settings, interference_visibility, source, rng), eve, rng)
        present = event is not None
        ports = event.ports if event is not None else (1, 1)
        bob_click = detect(present, ports[0], det, rng, party=Party.BOB, slot=slot,
                           photon_bin=event.bins.ab if event is not None else None)
        charly_click = detect(present, ports[1], det, rng, party=Party.CHARLY, slot=slot,
                              photon_bin=event.bins.ac if event is not None else None)
        detected = gate.accepts(True, bob_click, charly_click)
        if detected:
            bob = bob.with_click(bob_click.port, bob_click.cause)  # type: ignore[union-attr,assignment]
            charly = charly.with_click(charly_click.port, charly_click.cause)  # type: ignore[union-attr,assignment]
        records.append(RoundRecord(slot=slot, alice=alice, bob=bob, charly=charly, detected=detected,
                                   eve_touched=bool(event is not None and event.eve_touched)))
    return records


def run_session(n_pulses: int,
                source: SourceParams,
                det: DetectorParams,
                v: VisibilityLike,
                eve: EveConfig = NO_EVE,
                rng: SeedLike = 0,
                calibrate: bool = True,
                workers: Optional[int] = 1,
                block_pulses: int = DEFAULT_BLOCK_PULSES,
                min_sifted_bits: int = 1,
                slot_level: bool = False) -> SessionResult:
    """
    Run a key-generation session.

    Args:
        n_pulses: Number of pump slots
        source: Source parameters
        det: Detector parameters for Bob and Charly
        v: Observed visibility to reproduce (the interference visibility
            when calibrate is False)
        eve: Eavesdropper configuration
        rng: Seed, SeedSequence or Generator
        calibrate: Calibrate the interference visibility against noise
        workers: Threads for the compressed engine
        block_pulses: Pump slots per engine block
        min_sifted_bits: Below this count the report flags insufficient statistics
        slot_level: Use the slot-by-slot reference pipeline

    Returns:
        SessionResult: Transcript, sifted bits, keys and report

    Raises:
        ProtocolError: If the session cannot be run
    """
    if n_pulses < 1:
        raise ProtocolError(f"n_pulses must be at least 1, got {n_pulses}")
    source.check()
    det.check()
    eve.check()

    interference = interference_visibility_for(v, source, det, calibrate)
    rates = expected_coincidence_rates(source, det, eve.effective_prob)
    expected_qber = rates.expected_qber(interference) if rates.central > 0 else None

    logger.info(f"Starting session: {n_pulses} pump slots, interference visibility "
                f"{interference:.4f}, eve {eve.strategy.value} p={eve.interception_prob}")
    started = time.perf_counter()

    spectra: Dict[str, np.ndarray] = {}
    counters: Dict[str, int] = {}
    events: Optional[CentralEvents] = None
    if slot_level:
        generator = np.random.default_rng(seed_sequence(rng))
        transcript = run_slot_level(n_pulses, source, det, interference, eve, generator)
    else:
        model = SimulationModel(source=source, detectors=det, interference_visibility=interference,
                                interception_prob=eve.effective_prob, eve_target=eve.target.party)
        simulator = ShardedSimulator(model, sample_round_phases, block_pulses=block_pulses,
                                     workers=workers)
        result: BlockResult = simulator.run(n_pulses, rng)
        spectra = result.spectra
        counters = result.counters()
        events = result.events
        transcript = records_from_events(events)

    detected = [r for r in transcript if r.detected]
    sifted = [bit for bit in (sift(r) for r in detected) if bit is not None]
    keys = SessionKeys.from_sifted(sifted)

    report = build_run_report(
        n_pulses=n_pulses, pulse_rate=source.pulse_rate,
        rounds=[b.as_tuple() for b in sifted], accidental=[b.accidental for b in sifted],
        detected_rounds=len(detected), interference_visibility=interference,
        expected_qber=expected_qber, min_sifted_bits=min_sifted_bits,
    )
    elapsed = time.perf_counter() - started
    logger.info(f"Session finished in {elapsed:.2f}s: {len(detected)} detected rounds, "
                f"{len(sifted)} sifted bits, QBER {report.qber}")
    return SessionResult(transcript=transcript, sifted=sifted, keys=keys, report=report,
                         interference_visibility=interference, spectra=spectra,
                         counters=counters, stats={'elapsed_seconds': elapsed}, events=events)


@dataclass(frozen=True)
class EavesdropPoint:
    """QBER at one interception probability."""
    interception_prob: float
    detected_rounds: int
    sifted_bits: int
    errors: int
    qber: Optional[float]
    qber_std: Optional[float]
    expected_qber: Optional[float]
    renormalized_attack_qber: Optional[float] = None


def _origin_central_errors(result: SessionResult) -> Optional[Tuple[int, int]]:
    """(errors, sifted rounds) restricted to pairs created in the central sector."""
    if result.events is None:
        return None
    origin = dict(zip(result.events.slot.tolist(), result.events.origin_central.tolist()))
    kept = [b for b in result.sifted if origin.get(b.slot, False)]
    errors = sum(1 for b in kept if reconstruct_alice_bit(b) != b.alice_bit)
    return errors, len(kept)


def sweep_interception(probabilities: Sequence[float], n_pulses: int, source: SourceParams,
                       det: DetectorParams, v: VisibilityLike,
                       target: EveTarget = EveTarget.BOB_CHANNEL, seed: int = 0,
                       **session_options: Any) -> List[EavesdropPoint]:
    """
    QBER versus interception probability for the time-basis attack.

    Every point reuses the same seed, so points differ only through the
    attack. renormalized_attack_qber divides the errors among pairs created
    in the central sector by the sifted count of the attack-free session.
    """
    reference = run_session(n_pulses, source, det, v, NO_EVE, seed, **session_options)
    baseline = _origin_central_errors(reference)
    points = []
    for p in probabilities:
        eve = EveConfig(strategy=EveStrategy.TIME_BASIS_INTERCEPT, interception_prob=float(p), target=target)
        result = reference if p == 0 else run_session(n_pulses, source, det, v, eve, seed,
                                                       **session_options)
        errors = sum(1 for b in result.sifted if reconstruct_alice_bit(b) != b.alice_bit)
        renormalized = None
        attacked = _origin_central_errors(result)
        if baseline is not None and attacked is not None and baseline[1] > 0:
            renormalized = attacked[0] / baseline[1]
        rates = expected_coincidence_rates(source, det, float(p))
        report = result.report
        points.append(EavesdropPoint(
            interception_prob=float(p), detected_rounds=report.detected_rounds,
            sifted_bits=report.sifted_bits, errors=errors, qber=report.qber, qber_std=report.qber_std,
            expected_qber=rates.expected_qber(result.interference_visibility) if rates.central > 0 else None,
            renormalized_attack_qber=renormalized,
        ))
        logger.info(f"Interception p={p}: QBER {report.qber} over {report.sifted_bits} sifted bits")
    return points
