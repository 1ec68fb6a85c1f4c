#!/usr/bin/env python3
"""
GHZ-Share Devices Module

Detector and coincidence-electronics model:
- Gated single-photon detectors with quantum efficiency (optionally per
  port) and dark counts per gate
- Timing misclassification of photon detections into neighbouring bins
- AND-gate triple coincidences with the pump-pulse marker and the
  central-bin filter
- Analytic coincidence rates, accidental bookkeeping and the calibration
  of the interference visibility against a target observed visibility

Dead time and afterpulsing are not modeled.
"""

import enum
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .source import SourceParams, central_mass

# Configure logging
logger = logging.getLogger(__name__)

PEAK_BINS = (0, 1, 2)
CENTRAL_BIN = 1


class DeviceError(Exception):
    """Custom exception for detector and coincidence operations."""
    pass


class DetectorParameterError(DeviceError):
    """Exception raised for physically invalid detector parameters."""
    pass


class CalibrationError(DeviceError):
    """Exception raised when noise alone prevents reaching a target visibility."""
    pass


class Party(enum.Enum):
    """Parties owning photon detectors."""
    BOB = 'bob'
    CHARLY = 'charly'


class ClickCause(enum.Enum):
    """Origin of a detector click."""
    PHOTON = 'photon'
    DARK = 'dark'


@dataclass
class DetectorParams:
    """
    Single-photon counter parameters, applied to Bob's and Charly's detectors.

    port_efficiency optionally overrides the efficiency of the (+1, -1)
    detectors of each party.
    """
    efficiency: float = 0.05
    dark_rate: float = 3.0e4
    gate_window: float = 1.25e-8
    bin_width: float = 1.2e-9
    port_efficiency: Optional[Tuple[float, float]] = None
    bin_jitter_prob: float = 0.0

    @property
    def dark_prob_per_gate(self) -> float:
        return self.dark_rate * self.gate_window

    @property
    def dark_bin_prob(self) -> float:
        """Probability that a dark click falls inside one given peak bin."""
        return self.bin_width / self.gate_window

    def efficiency_for(self, port: int) -> float:
        if self.port_efficiency is None:
            return self.efficiency
        return self.port_efficiency[0] if port == 1 else self.port_efficiency[1]

    @property
    def max_efficiency(self) -> float:
        return max(self.efficiency_for(1), self.efficiency_for(-1))

    @property
    def mean_efficiency(self) -> float:
        return 0.5 * (self.efficiency_for(1) + self.efficiency_for(-1))

    def problems(self) -> List[str]:
        """Return human-readable invariant violations, empty when valid."""
        issues = []
        if not 0.0 <= self.efficiency <= 1.0:
            issues.append(f"efficiency: must be a probability, got {self.efficiency}")
        if self.port_efficiency is not None:
            for label, value in zip(('+', '-'), self.port_efficiency):
                if not 0.0 <= value <= 1.0:
                    issues.append(f"port_efficiency[{label}]: must be a probability, got {value}")
        if self.dark_rate < 0:
            issues.append(f"dark_rate: must be non-negative, got {self.dark_rate}")
        if not self.gate_window > 0:
            issues.append(f"gate_window: must be positive, got {self.gate_window}")
        elif self.dark_prob_per_gate >= 1.0:
            issues.append(f"dark_rate: dark probability per gate {self.dark_prob_per_gate} >= 1")
        if not self.bin_width > 0:
            issues.append(f"bin_width: must be positive, got {self.bin_width}")
        elif self.gate_window > 0 and len(PEAK_BINS) * self.bin_width > self.gate_window:
            issues.append("bin_width: three peak bins do not fit into the gate window")
        if not 0.0 <= self.bin_jitter_prob <= 1.0:
            issues.append(f"bin_jitter_prob: must be a probability, got {self.bin_jitter_prob}")
        return issues

    def check(self) -> None:
        """
        Raise if any invariant is violated.

        Raises:
            DetectorParameterError: With all violations joined
        """
        issues = self.problems()
        if issues:
            raise DetectorParameterError("; ".join(issues))


@dataclass(frozen=True)
class ClickRecord:
    """A detector click within one gated pump slot."""
    party: Party
    port: int
    slot: int
    cause: ClickCause
    time_bin: Optional[int] = None

    @property
    def in_central_bin(self) -> bool:
        return self.time_bin == CENTRAL_BIN


@dataclass(frozen=True)
class CoincidenceGate:
    """AND-gate of the pump marker with Bob's and Charly's clicks."""
    require_pump_sync: bool = True
    central_bin_filter: bool = True

    def accepts(self, pump_marker: bool, bob: Optional[ClickRecord],
                charly: Optional[ClickRecord]) -> bool:
        if not triple_coincidence(pump_marker or not self.require_pump_sync, bob, charly):
            return False
        if self.central_bin_filter:
            return bob.in_central_bin and charly.in_central_bin  # type: ignore[union-attr]
        return True


def _jitter(photon_bin: Optional[int], params: DetectorParams, rng: np.random.Generator) -> Optional[int]:
    if photon_bin is None:
        return None
    if rng.random() < params.bin_jitter_prob:
        return photon_bin + (1 if rng.random() < 0.5 else -1)
    return photon_bin


def dark_time_bin(params: DetectorParams, rng: np.random.Generator) -> Optional[int]:
    """Peak bin hit by a dark click uniform over the gate, or None outside all peaks."""
    u = rng.random()
    if u < len(PEAK_BINS) * params.dark_bin_prob:
        return PEAK_BINS[min(int(u / params.dark_bin_prob), len(PEAK_BINS) - 1)]
    return None


def detect(photon_present: bool, port_if_photon: int, params: DetectorParams,
           rng: np.random.Generator, party: Party = Party.BOB, slot: int = 0,
           photon_bin: Optional[int] = None) -> Optional[ClickRecord]:
    """
    Detection at one party within one gate.

    A photon clicks with the efficiency of its port; independently, a dark
    click occurs with probability dark_rate * gate_window on a uniform port.
    When both happen the photon click takes the slot.

    Args:
        photon_present: Whether a photon reaches the party
        port_if_photon: Output port of the photon (+1 or -1)
        params: Detector parameters
        rng: Random generator
        party: Detecting party
        slot: Pump slot index
        photon_bin: Time bin of the photon relative to the pump pulse

    Returns:
        Optional[ClickRecord]: The click, or None
    """
    photon_click = photon_present and rng.random() < params.efficiency_for(port_if_photon)
    dark_click = rng.random() < params.dark_prob_per_gate
    if photon_click:
        return ClickRecord(party=party, port=port_if_photon, slot=slot,
                           cause=ClickCause.PHOTON, time_bin=_jitter(photon_bin, params, rng))
    if dark_click:
        port = 1 - 2 * int(rng.integers(0, 2))
        return ClickRecord(party=party, port=port, slot=slot, cause=ClickCause.DARK,
                           time_bin=dark_time_bin(params, rng))
    return None


def triple_coincidence(pump_marker: bool, bob: Optional[ClickRecord],
                       charly: Optional[ClickRecord]) -> bool:
    """True iff the pump marker and both clicks are present in the gated slot."""
    return bool(pump_marker) and bob is not None and charly is not None


def expected_accidentals(params: DetectorParams, singles_rate_bob: float,
                         singles_rate_charly: float, pulse_rate: float) -> float:
    """
    Rate of coincidences between uncorrelated clicks.

    Args:
        params: Detector parameters (kept for symmetry with the rate model)
        singles_rate_bob: Uncorrelated click rate at Bob's in Hz
        singles_rate_charly: Uncorrelated click rate at Charly's in Hz
        pulse_rate: Pump repetition rate in Hz

    Returns:
        float: Accidental triple-coincidence rate in Hz

    Raises:
        DeviceError: For negative rates
    """
    if min(singles_rate_bob, singles_rate_charly, pulse_rate) < 0:
        raise DeviceError("Rates must be non-negative")
    if pulse_rate == 0:
        return 0.0
    p_bob = singles_rate_bob / pulse_rate
    p_charly = singles_rate_charly / pulse_rate
    return pulse_rate * p_bob * p_charly


def expected_singles_rate(source: SourceParams, params: DetectorParams) -> float:
    """Expected click rate per party in Hz, photons and dark counts combined."""
    p = source.pair_prob_per_slot
    d = params.dark_prob_per_gate
    eta = params.mean_efficiency
    per_slot = p * (1.0 - (1.0 - eta) * (1.0 - d)) + (1.0 - p) * d
    return source.pulse_rate * per_slot


@dataclass(frozen=True)
class CoincidenceRates:
    """Per-slot probabilities of central triple coincidences by origin."""
    coherent: float
    incoherent: float
    accidental: float
    any_triple: float

    @property
    def central(self) -> float:
        return self.coherent + self.incoherent + self.accidental

    def error_probability(self, interference_visibility: float) -> float:
        """Per-slot probability of a sifted-round error."""
        return (self.coherent * (1.0 - interference_visibility)
                + self.incoherent + self.accidental) / 2.0

    def expected_qber(self, interference_visibility: float) -> float:
        if self.central <= 0:
            return 0.0
        return self.error_probability(interference_visibility) / self.central

    def observed_visibility(self, interference_visibility: float) -> float:
        return 1.0 - 2.0 * self.expected_qber(interference_visibility)

    def accidental_error_fraction(self, interference_visibility: float) -> float:
        errors = self.error_probability(interference_visibility)
        return (self.accidental / 2.0) / errors if errors > 0 else 0.0


def expected_coincidence_rates(source: SourceParams, params: DetectorParams,
                               interception_prob: float = 0.0) -> CoincidenceRates:
    """
    Analytic per-slot probabilities of triple coincidences.

    Unequal port efficiencies are folded into the mean efficiency.
    """
    p = source.pair_prob_per_slot
    d = params.dark_prob_per_gate
    d_central = d * params.dark_bin_prob
    eta = params.mean_efficiency
    jitter = params.bin_jitter_prob

    mass = central_mass(interception_prob=interception_prob, jitter_prob=jitter)
    coherent = p * eta * eta * mass.coherent
    incoherent = p * eta * eta * mass.incoherent

    photon_central = 0.5 - jitter / 4.0
    photon_dark = 2.0 * p * eta * photon_central * (1.0 - eta) * d_central
    dark_dark = d_central ** 2 * ((1.0 - p) + p * (1.0 - eta) ** 2)

    photon_click = 1.0 - (1.0 - eta) * (1.0 - d)
    any_triple = p * photon_click ** 2 + (1.0 - p) * d * d
    return CoincidenceRates(coherent=coherent, incoherent=incoherent,
                            accidental=photon_dark + dark_dark, any_triple=any_triple)


def calibrate_interference_visibility(target_visibility: float, source: SourceParams,
                                      params: DetectorParams) -> float:
    """
    Interference visibility giving the target observed visibility under noise.

    Solves V_int * coherent = target * (coherent + incoherent + accidental),
    the condition for QBER = (1 - target) / 2 on sifted rounds.

    Raises:
        CalibrationError: If no coherent coincidences occur or the noise floor
            already exceeds the target error rate
    """
    rates = expected_coincidence_rates(source, params)
    if rates.coherent <= 0:
        if target_visibility == 0:
            return 0.0
        raise CalibrationError("No coherent coincidences: cannot reach a non-zero visibility")
    interference = target_visibility * rates.central / rates.coherent
    if interference > 1.0 + 1e-12:
        raise CalibrationError(
            f"Noise floor too high: visibility {target_visibility} needs interference "
            f"visibility {interference:.4f} > 1"
        )
    interference = min(interference, 1.0)
    logger.debug(f"Calibrated interference visibility {interference:.6f} for target {target_visibility}")
    return interference
