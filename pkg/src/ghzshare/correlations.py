#!/usr/bin/env python3
"""
GHZ-Share Correlations Module

Exact quantum-mechanical predictions for pseudo-GHZ triple coincidences:
- Phase, PhaseSettings, Outcome and Visibility value types
- Correlation function E = V cos(alpha + beta + gamma)
- Outcome distributions for the three-party GHZ case and for the
  post-selected (j, k) ports given Alice's encoding phase
- Bell-parameter algebra for the three-particle inequality
- A brute-force state-vector oracle (phase shifters + 50/50 beamsplitters)

Imperfect visibility is a convex mixture of the ideal distribution with the
uniform distribution carrying weight 1 - V.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Tuple, Union

import numpy as np

# Configure logging
logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
PHASE_TOLERANCE = 1e-9
PHASE_GRID_CELLS = round(TWO_PI / PHASE_TOLERANCE)
SIGNS = (1, -1)


class CorrelationError(Exception):
    """Custom exception for correlation model operations."""
    pass


class InvalidPhaseError(CorrelationError):
    """Exception raised for non-finite phase values."""
    pass


class InvalidVisibilityError(CorrelationError):
    """Exception raised when a visibility lies outside [0, 1]."""
    pass


def canonical_angle(value: float) -> float:
    """
    Map an angle in radians onto [0, 2*pi).

    Values within PHASE_TOLERANCE below 2*pi wrap to 0.

    Raises:
        InvalidPhaseError: If the value is not finite
    """
    if not math.isfinite(value):
        raise InvalidPhaseError(f"Phase must be finite, got {value}")
    angle = math.fmod(value, TWO_PI)
    if angle < 0.0:
        angle += TWO_PI
    if TWO_PI - angle < PHASE_TOLERANCE:
        angle = 0.0
    return angle


@dataclass(frozen=True, eq=False)
class Phase:
    """An interferometer phase in radians, stored canonically in [0, 2*pi)."""
    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, 'value', canonical_angle(float(self.value)))

    def grid_key(self) -> int:
        """Index of the PHASE_TOLERANCE-wide cell holding the phase; equality and hashing use it."""
        return round(self.value / PHASE_TOLERANCE) % PHASE_GRID_CELLS

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Phase):
            return NotImplemented
        return self.grid_key() == other.grid_key()

    def __hash__(self) -> int:
        return hash(self.grid_key())

    def __add__(self, other: Union['Phase', float]) -> 'Phase':
        return Phase(self.value + as_phase(other).value)

    def __neg__(self) -> 'Phase':
        return Phase(-self.value)

    def __float__(self) -> float:
        return self.value

    def distance(self, other: 'Phase') -> float:
        """Circular distance to another phase."""
        delta = abs(self.value - other.value)
        return min(delta, TWO_PI - delta)

    def cos(self) -> float:
        return math.cos(self.value)


PhaseLike = Union[Phase, float, int]


def as_phase(value: PhaseLike) -> Phase:
    """Coerce a float (radians) or Phase into a Phase."""
    if isinstance(value, Phase):
        return value
    return Phase(float(value))


@dataclass(frozen=True)
class PhaseSettings:
    """The three interferometer phases of one round (alpha', beta, gamma)."""
    alice: Phase
    bob: Phase
    charly: Phase

    @classmethod
    def of(cls, alice: PhaseLike, bob: PhaseLike, charly: PhaseLike) -> 'PhaseSettings':
        return cls(as_phase(alice), as_phase(bob), as_phase(charly))

    def phase_sum(self) -> Phase:
        return Phase(self.alice.value + self.bob.value + self.charly.value)


@dataclass(frozen=True)
class Outcome:
    """Output port labels: Alice's encoded parameter i, Bob's port j, Charly's port k."""
    i: int
    j: int
    k: int

    def __post_init__(self) -> None:
        for name in ('i', 'j', 'k'):
            if getattr(self, name) not in SIGNS:
                raise CorrelationError(f"Outcome component {name} must be +1 or -1")

    @property
    def product(self) -> int:
        return self.i * self.j * self.k


@dataclass(frozen=True)
class Visibility:
    """Fringe contrast V in [0, 1]."""
    value: float

    def __post_init__(self) -> None:
        value = float(self.value)
        if not (0.0 <= value <= 1.0) or math.isnan(value):
            raise InvalidVisibilityError(f"Visibility must lie in [0, 1], got {self.value}")
        object.__setattr__(self, 'value', value)


VisibilityLike = Union[Visibility, float, int]


def as_visibility(value: VisibilityLike) -> Visibility:
    """Coerce a float or Visibility into a Visibility."""
    if isinstance(value, Visibility):
        return value
    return Visibility(float(value))


@dataclass(frozen=True)
class GhzStateLabels:
    """Mode labels standing for |0> and |1> (or |s> and |l>)."""
    basis0: str = '0'
    basis1: str = '1'

    def __post_init__(self) -> None:
        if self.basis0 == self.basis1:
            raise CorrelationError("GHZ mode labels must be distinct")


TIME_BIN_LABELS = GhzStateLabels(basis0='s', basis1='l')


@dataclass(frozen=True)
class BellSettings:
    """
    Analyzer settings for the three-particle Bell combination.

    combinations() yields the four settings in the order
    (a', b, c), (a, b', c), (a, b, c'), (a', b', c'); the last one enters S3
    with a minus sign.
    """
    alpha: Phase
    alpha_prime: Phase
    beta: Phase
    beta_prime: Phase
    gamma: Phase
    gamma_prime: Phase

    @classmethod
    def of(cls, alpha: PhaseLike, alpha_prime: PhaseLike, beta: PhaseLike,
           beta_prime: PhaseLike, gamma: PhaseLike, gamma_prime: PhaseLike) -> 'BellSettings':
        return cls(as_phase(alpha), as_phase(alpha_prime), as_phase(beta),
                   as_phase(beta_prime), as_phase(gamma), as_phase(gamma_prime))

    def combinations(self) -> List[PhaseSettings]:
        return [
            PhaseSettings(self.alpha_prime, self.beta, self.gamma),
            PhaseSettings(self.alpha, self.beta_prime, self.gamma),
            PhaseSettings(self.alpha, self.beta, self.gamma_prime),
            PhaseSettings(self.alpha_prime, self.beta_prime, self.gamma_prime),
        ]


OPTIMAL_BELL_SETTINGS = BellSettings.of(
    alpha=-math.pi / 6, alpha_prime=math.pi / 3,
    beta=-math.pi / 6, beta_prime=math.pi / 3,
    gamma=-math.pi / 6, gamma_prime=math.pi / 3,
)


def correlation(settings: PhaseSettings, v: VisibilityLike) -> float:
    """
    Correlation function E(alpha, beta, gamma) = V cos(alpha + beta + gamma).

    Args:
        settings: Phases of the three interferometers
        v: Visibility of the correlations

    Returns:
        float: Correlation value with |E| <= V
    """
    return as_visibility(v).value * settings.phase_sum().cos()


def outcome_distribution(settings: PhaseSettings, v: VisibilityLike) -> Dict[Tuple[int, int], float]:
    """
    Probability of Bob's and Charly's ports given Alice's encoding phase alpha'.

    P(j, k) = 1/4 (1 + jk V cos(alpha' + beta + gamma)).

    Returns:
        Dict[Tuple[int, int], float]: Probabilities keyed by (j, k)
    """
    e = correlation(settings, v)
    return {(j, k): 0.25 * (1.0 + j * k * e) for j in SIGNS for k in SIGNS}


def ghz_joint_distribution(settings: PhaseSettings, v: VisibilityLike) -> Dict[Tuple[int, int, int], float]:
    """
    Joint probability of all three output ports for a GHZ state.

    P(i, j, k) = 1/8 (1 + ijk V cos(alpha + beta + gamma)).

    Returns:
        Dict[Tuple[int, int, int], float]: Probabilities keyed by (i, j, k)
    """
    e = correlation(settings, v)
    return {
        (i, j, k): 0.125 * (1.0 + i * j * k * e)
        for i in SIGNS for j in SIGNS for k in SIGNS
    }


def s3(e1: float, e2: float, e3: float, e4: float) -> float:
    """
    Three-particle Bell parameter |E1 + E2 + E3 - E4|.

    Raises:
        CorrelationError: If a correlation value lies outside [-1, 1]
    """
    values = (e1, e2, e3, e4)
    for value in values:
        if not (-1.0 - 1e-12 <= value <= 1.0 + 1e-12):
            raise CorrelationError(f"Correlation values must lie in [-1, 1], got {value}")
    return abs(e1 + e2 + e3 - e4)


def s3_for_settings(settings: BellSettings, v: VisibilityLike) -> float:
    """Predicted S3 for a set of Bell settings at visibility V."""
    e = [correlation(combo, v) for combo in settings.combinations()]
    return s3(*e)


def local_bound() -> float:
    """Upper bound of S3 for local theories."""
    return 2.0


def quantum_bound() -> float:
    """Maximal quantum-mechanical value of S3."""
    return 4.0


def threshold_visibility(parties: int) -> float:
    """
    Visibility above which E = V cos(...) violates the Bell inequality.

    Args:
        parties: 2 for the standard inequality, 3 for the three-particle one

    Raises:
        CorrelationError: For party counts other than 2 or 3
    """
    if parties == 3:
        return local_bound() / quantum_bound()
    if parties == 2:
        return 1.0 / math.sqrt(2.0)
    raise CorrelationError(f"Threshold visibility is defined for 2 or 3 parties, got {parties}")


# ============================================================================
# STATE-VECTOR ORACLE
# ============================================================================

BEAMSPLITTER = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)


def port_unitary(phase: PhaseLike) -> np.ndarray:
    """Phase shifter on mode 1 followed by a symmetric 50/50 beamsplitter."""
    shifter = np.diag([1.0, np.exp(1j * as_phase(phase).value)])
    return BEAMSPLITTER @ shifter


def ghz_state(labels: GhzStateLabels = GhzStateLabels(), parties: int = 3) -> Dict[str, complex]:
    """GHZ state as a mapping from ket strings to amplitudes."""
    amplitude = 1.0 / math.sqrt(2.0)
    return {labels.basis0 * parties: amplitude, labels.basis1 * parties: amplitude}


def _state_vector(kets: Mapping[str, complex], labels: GhzStateLabels, parties: int) -> np.ndarray:
    vector = np.zeros(2 ** parties, dtype=complex)
    for ket, amplitude in kets.items():
        index = 0
        for symbol in ket:
            index = 2 * index + (1 if symbol == labels.basis1 else 0)
        vector[index] += amplitude
    return vector


def _port_sign(index_bit: int) -> int:
    # Output port 0 is labelled +1.
    return 1 - 2 * index_bit


def statevector_joint_distribution(settings: PhaseSettings, v: VisibilityLike,
                                   labels: GhzStateLabels = GhzStateLabels()) -> Dict[Tuple[int, int, int], float]:
    """
    Brute-force (i, j, k) distribution for the GHZ state.

    Each party applies its phase to mode 1 and combines the modes at a
    beamsplitter; squared output amplitudes are mixed with uniform noise.
    """
    vis = as_visibility(v).value
    psi = _state_vector(ghz_state(labels), labels, 3)
    unitary = np.kron(np.kron(port_unitary(settings.alice), port_unitary(settings.bob)),
                      port_unitary(settings.charly))
    probabilities = np.abs(unitary @ psi) ** 2
    result = {}
    for index, (x, y, z) in enumerate(itertools.product((0, 1), repeat=3)):
        result[(_port_sign(x), _port_sign(y), _port_sign(z))] = (
            vis * float(probabilities[index]) + (1.0 - vis) / 8.0
        )
    return result


def central_peak_state(settings: PhaseSettings) -> np.ndarray:
    """
    Post-selected Bob/Charly state (|ss> + e^{i(alpha'+beta+gamma)} |ll>)/sqrt(2).

    The pump photon is absorbed by the post-selection, leaving a two-mode
    state over Bob's and Charly's time bins.
    """
    vector = np.zeros(4, dtype=complex)
    vector[0] = 1.0 / math.sqrt(2.0)
    vector[3] = np.exp(1j * settings.phase_sum().value) / math.sqrt(2.0)
    return vector


def statevector_port_distribution(settings: PhaseSettings, v: VisibilityLike) -> Dict[Tuple[int, int], float]:
    """Brute-force (j, k) distribution of the central-peak state behind two beamsplitters."""
    vis = as_visibility(v).value
    unitary = np.kron(BEAMSPLITTER, BEAMSPLITTER)
    probabilities = np.abs(unitary @ central_peak_state(settings)) ** 2
    result = {}
    for index, (y, z) in enumerate(itertools.product((0, 1), repeat=2)):
        result[(_port_sign(y), _port_sign(z))] = vis * float(probabilities[index]) + (1.0 - vis) / 4.0
    return result


def iter_outcomes() -> Iterator[Outcome]:
    """All eight (i, j, k) outcomes."""
    for i, j, k in itertools.product(SIGNS, repeat=3):
        yield Outcome(i, j, k)
