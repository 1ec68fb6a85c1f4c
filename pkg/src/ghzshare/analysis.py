#!/usr/bin/env python3
"""
GHZ-Share Analysis Module

Statistics over simulated coincidences and keys:
- Poisson-weighted sinusoidal fringe fits per detector combination
- Visibility, QBER and Bell parameter estimates
- Significance against the three- and two-party threshold visibilities
- Bit rates and the aggregated run report
"""

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, minimize

from .correlations import (
    OPTIMAL_BELL_SETTINGS, TWO_PI, BellSettings, Phase, PhaseSettings,
    VisibilityLike, as_visibility, s3, threshold_visibility
)

# Configure logging
logger = logging.getLogger(__name__)

COMBOS = ('++', '+-', '-+', '--')
MIN_SCAN_POINTS = 8
MAX_SCAN_GAP = math.pi / 2


class AnalysisError(Exception):
    """Custom exception for analysis operations."""
    pass


class FringeFitError(AnalysisError):
    """Exception raised when a fringe scan cannot be fitted."""
    pass


class InsufficientStatisticsError(AnalysisError):
    """Exception raised when too few events are available for an estimate."""
    pass


def combo_label(j: int, k: int) -> str:
    """Detector combination label such as '+-' for j=+1, k=-1."""
    return ('+' if j == 1 else '-') + ('+' if k == 1 else '-')


def combo_signs(label: str) -> Tuple[int, int]:
    if label not in COMBOS:
        raise AnalysisError(f"Unknown detector combination: {label}")
    return (1 if label[0] == '+' else -1, 1 if label[1] == '+' else -1)


@dataclass(frozen=True)
class FringePoint:
    """Triple-coincidence counts per detector combination at one scan phase."""
    phase: Phase
    counts: Dict[str, int]
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise AnalysisError(f"Point duration must be positive, got {self.duration}")
        for combo, count in self.counts.items():
            if combo not in COMBOS:
                raise AnalysisError(f"Unknown detector combination: {combo}")
            if count < 0:
                raise AnalysisError(f"Counts must be non-negative, got {count} for {combo}")


@dataclass
class FringeScan:
    """Phase scan of Alice's interferometer."""
    points: List[FringePoint] = field(default_factory=list)

    def phases(self) -> np.ndarray:
        return np.array([p.phase.value for p in self.points])

    def max_gap(self) -> float:
        """Largest circular gap between neighbouring scan phases."""
        if not self.points:
            return TWO_PI
        phases = np.sort(self.phases())
        gaps = np.diff(np.concatenate([phases, [phases[0] + TWO_PI]]))
        return float(gaps.max())

    def problems(self) -> List[str]:
        issues = []
        if len(self.points) < MIN_SCAN_POINTS:
            issues.append(f"scan has {len(self.points)} points, at least {MIN_SCAN_POINTS} required")
        if self.max_gap() > MAX_SCAN_GAP + 1e-12:
            issues.append("scan does not cover a full period")
        return issues


@dataclass(frozen=True)
class ComboFit:
    """Fitted fringe counts(phi) = offset (1 + V cos(phi + phase0)) for one combination."""
    combo: str
    offset: float
    amplitude: float
    phase0: float
    visibility: float
    visibility_std: float
    phase0_reliable: bool = True
    offset_std: float = 0.0
    phase0_std: float = 0.0


@dataclass(frozen=True)
class VisibilityEstimate:
    """Mean visibility with its standard error and per-combination values."""
    value: float
    std_error: float
    per_combination: Dict[str, Tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class FringeFit:
    combos: Dict[str, ComboFit]
    visibility: VisibilityEstimate


def _fringe_model(phi: np.ndarray, offset: float, c: float, s: float) -> np.ndarray:
    return offset + c * np.cos(phi) + s * np.sin(phi)


def _fringe_jacobian(phi: np.ndarray, offset: float, c: float, s: float) -> np.ndarray:
    return np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])


def fit_combo(phases: np.ndarray, counts: np.ndarray, combo: str = '++',
              sigma: Optional[np.ndarray] = None) -> ComboFit:
    """
    Fit one combination's rates with the period fixed to 2*pi.

    Without sigma, points are weighted with Poisson errors sqrt(max(counts, 1)).
    Callers that rescale counts pass the equally rescaled raw-count errors.

    Raises:
        FringeFitError: If the fit fails or the offset is not positive
    """
    counts = np.asarray(counts, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if counts.max() <= 0:
        raise FringeFitError(f"No counts in combination {combo}")

    if np.ptp(counts) == 0:
        offset = float(counts[0])
        logger.warning(f"Constant fringe in combination {combo}: phase0 unreliable")
        return ComboFit(combo=combo, offset=offset, amplitude=0.0, phase0=0.0, visibility=0.0,
                        visibility_std=float(math.sqrt(2.0 / (len(counts) * max(offset, 1.0)))),
                        phase0_reliable=False, offset_std=math.sqrt(max(offset, 1.0) / len(counts)),
                        phase0_std=math.pi)

    if sigma is None:
        sigma = np.sqrt(np.maximum(counts, 1.0))
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != counts.shape or np.any(sigma <= 0):
            raise FringeFitError(f"Invalid count errors for combination {combo}")
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    initial, *_ = np.linalg.lstsq(design / sigma[:, None], counts / sigma, rcond=None)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter('error', OptimizeWarning)
            popt, pcov = curve_fit(_fringe_model, phases, counts, p0=initial, jac=_fringe_jacobian,
                                   sigma=sigma, absolute_sigma=True)
    except (RuntimeError, ValueError, OptimizeWarning) as e:
        logger.error(f"Fringe fit failed for combination {combo}: {e}")
        raise FringeFitError(f"Fringe fit failed for combination {combo}: {e}")

    offset, c, s = (float(x) for x in popt)
    if offset <= 0:
        raise FringeFitError(f"Non-positive fringe offset {offset} in combination {combo}")
    amplitude = math.hypot(c, s)
    phase0 = Phase(math.atan2(-s, c)).value

    if amplitude > 0:
        gradient = np.array([-amplitude / offset ** 2, c / (amplitude * offset), s / (amplitude * offset)])
    else:
        gradient = np.array([0.0, 1.0 / offset, 1.0 / offset])
    variance = float(gradient @ pcov @ gradient)
    visibility = min(max(amplitude / offset, 0.0), 1.0)
    if amplitude > 0:
        phase_gradient = np.array([0.0, s / amplitude ** 2, -c / amplitude ** 2])
        phase0_std = math.sqrt(max(float(phase_gradient @ pcov @ phase_gradient), 0.0))
    else:
        phase0_std = math.pi

    return ComboFit(combo=combo, offset=offset, amplitude=amplitude, phase0=phase0,
                    visibility=visibility, visibility_std=math.sqrt(max(variance, 0.0)),
                    offset_std=math.sqrt(max(float(pcov[0, 0]), 0.0)), phase0_std=phase0_std)


def weighted_mean(values: Sequence[float], std_errors: Sequence[float]) -> Tuple[float, float]:
    """
    Inverse-variance weighted mean and its standard error.

    Zero errors dominate: if any are zero, the plain mean of those values is
    returned with zero error.
    """
    values_arr = np.asarray(values, dtype=float)
    errors_arr = np.asarray(std_errors, dtype=float)
    if len(values_arr) == 0:
        raise InsufficientStatisticsError("No values to average")
    exact = errors_arr == 0
    if exact.any():
        return float(values_arr[exact].mean()), 0.0
    weights = 1.0 / errors_arr ** 2
    mean = float(np.sum(weights * values_arr) / np.sum(weights))
    return mean, float(1.0 / math.sqrt(np.sum(weights)))


def fit_fringe(scan: FringeScan) -> FringeFit:
    """
    Fit all detector combinations of a fringe scan.

    Args:
        scan: Scan with at least eight points covering a full period

    Returns:
        FringeFit: Per-combination fits and the inverse-variance weighted visibility

    Raises:
        FringeFitError: If the scan is invalid or every combination fails
    """
    issues = scan.problems()
    if issues:
        raise FringeFitError("Invalid fringe scan: " + "; ".join(issues))

    phases = scan.phases()
    durations = np.array([p.duration for p in scan.points])
    reference = float(durations[0])
    fits: Dict[str, ComboFit] = {}
    for combo in COMBOS:
        counts = np.array([p.counts.get(combo, 0) for p in scan.points], dtype=float)
        if counts.sum() == 0:
            continue
        # Normalized to the first point's duration; errors come from the raw counts.
        scale = reference / durations
        fits[combo] = fit_combo(phases, counts * scale, combo,
                                sigma=np.sqrt(np.maximum(counts, 1.0)) * scale)

    if not fits:
        raise FringeFitError("Fringe scan contains no counts")

    mean, std = weighted_mean([f.visibility for f in fits.values()],
                              [f.visibility_std for f in fits.values()])
    estimate = VisibilityEstimate(
        value=mean, std_error=std,
        per_combination={c: (f.visibility, f.visibility_std) for c, f in fits.items()},
    )
    logger.debug(f"Fringe fit: V={mean:.4f} +- {std:.4f} over {len(fits)} combination(s)")
    return FringeFit(combos=fits, visibility=estimate)


def visibility_from_extrema(maximum: float, minimum: float) -> float:
    """Fringe contrast (max - min) / (max + min)."""
    if maximum + minimum <= 0:
        raise AnalysisError("Extrema must not both be zero")
    return (maximum - minimum) / (maximum + minimum)


def qber_from_visibility(v: VisibilityLike) -> float:
    """Error rate of fringe-type errors, (1 - V) / 2."""
    return (1.0 - as_visibility(v).value) / 2.0


def s_from_visibility(v: VisibilityLike) -> float:
    """S3 at the optimal settings, 4 V."""
    return 4.0 * as_visibility(v).value


def sigma_distance(value: float, reference: float, std_error: float) -> float:
    """
    Distance of a value from a reference in units of its standard error.

    Raises:
        AnalysisError: If std_error is not positive
    """
    if std_error <= 0:
        raise AnalysisError(f"Standard error must be positive, got {std_error}")
    return (value - reference) / std_error


def bit_rate(sifted_bits: int, wall_time: float) -> float:
    """Sifted bits per second of wall-clock time."""
    if wall_time <= 0:
        raise AnalysisError(f"Wall time must be positive, got {wall_time}")
    return sifted_bits / wall_time


def qber_from_keys(alice_key: str, joint_key: str) -> Tuple[float, float]:
    """
    Mismatch fraction between two bit strings with its binomial error.

    Returns:
        Tuple[float, float]: (qber, sqrt(q (1 - q) / N))

    Raises:
        AnalysisError: If the keys differ in length
        InsufficientStatisticsError: If the keys are empty
    """
    if len(alice_key) != len(joint_key):
        raise AnalysisError(f"Key lengths differ: {len(alice_key)} != {len(joint_key)}")
    n = len(alice_key)
    if n == 0:
        raise InsufficientStatisticsError("Empty keys")
    errors = sum(1 for a, b in zip(alice_key, joint_key) if a != b)
    q = errors / n
    return q, math.sqrt(q * (1.0 - q) / n)


def key_visibility(rounds: Iterable[Tuple[int, int, int, int]]) -> VisibilityEstimate:
    """
    Visibility per detector combination from sifted (i, j, k, l) rounds.

    For each (j, k) combination V = 1 - 2 q with q the error fraction among
    rounds ending in that combination; the mean is count-weighted and thus
    equals 1 - 2 QBER.
    """
    totals = {combo: 0 for combo in COMBOS}
    errors = {combo: 0 for combo in COMBOS}
    for i, j, k, l in rounds:
        combo = combo_label(j, k)
        totals[combo] += 1
        if i * j * k * l != 1:
            errors[combo] += 1
    n = sum(totals.values())
    if n == 0:
        raise InsufficientStatisticsError("No sifted rounds")

    per_combination = {}
    for combo in COMBOS:
        if totals[combo]:
            q = errors[combo] / totals[combo]
            per_combination[combo] = (1.0 - 2.0 * q, 2.0 * math.sqrt(q * (1.0 - q) / totals[combo]))
    q_all = sum(errors.values()) / n
    return VisibilityEstimate(value=1.0 - 2.0 * q_all,
                              std_error=2.0 * math.sqrt(q_all * (1.0 - q_all) / n),
                              per_combination=per_combination)


def accidental_error_fraction(errors: Sequence[bool], accidental: Sequence[bool]) -> float:
    """Share of errors occurring in rounds with at least one dark click."""
    total = sum(1 for e in errors if e)
    if total == 0:
        return 0.0
    return sum(1 for e, a in zip(errors, accidental) if e and a) / total


# ============================================================================
# BELL PARAMETER
# ============================================================================

class MeasuredRound(NamedTuple):
    """Analyzer settings and detector ports of one coincidence."""
    settings: PhaseSettings
    j: int
    k: int


@dataclass(frozen=True)
class CorrelationEstimate:
    """Empirical E = <j k> for one analyzer setting."""
    settings: PhaseSettings
    value: float
    std_error: float
    rounds: int


def correlation_from_ports(j: Sequence[int], k: Sequence[int]) -> Tuple[float, float]:
    """Mean of j*k and its standard error."""
    products = np.asarray(j, dtype=float) * np.asarray(k, dtype=float)
    n = len(products)
    if n == 0:
        raise InsufficientStatisticsError("No rounds for a correlation estimate")
    e = float(products.mean())
    return e, math.sqrt(max(1.0 - e * e, 0.0) / n)


def correlation_table(transcript: Iterable[Any],
                      settings: BellSettings = OPTIMAL_BELL_SETTINGS) -> List[CorrelationEstimate]:
    """
    E values for the four Bell combinations.

    transcript items need .settings (PhaseSettings) and .j / .k ports.

    Raises:
        InsufficientStatisticsError: If a combination has no rounds
    """
    combos = settings.combinations()
    ports: Dict[int, Tuple[List[int], List[int]]] = {n: ([], []) for n in range(len(combos))}
    for record in transcript:
        for n, combo in enumerate(combos):
            if record.settings == combo:
                ports[n][0].append(record.j)
                ports[n][1].append(record.k)
                break

    table = []
    for n, combo in enumerate(combos):
        js, ks = ports[n]
        if not js:
            raise InsufficientStatisticsError(f"No rounds for Bell combination {n + 1}")
        value, std = correlation_from_ports(js, ks)
        table.append(CorrelationEstimate(settings=combo, value=value, std_error=std, rounds=len(js)))
    return table


def estimate_s3(transcript: Iterable[Any], settings: BellSettings = OPTIMAL_BELL_SETTINGS) -> float:
    """Empirical S3 from the four measured correlation values."""
    table = correlation_table(transcript, settings)
    return s3(*(e.value for e in table))


def s3_std_error(table: Sequence[CorrelationEstimate]) -> float:
    return math.sqrt(sum(e.std_error ** 2 for e in table))


def _negative_s3(angles: np.ndarray, visibility: float) -> float:
    a, a_p, b, b_p, c, c_p = angles
    value = (math.cos(a_p + b + c) + math.cos(a + b_p + c)
             + math.cos(a + b + c_p) - math.cos(a_p + b_p + c_p))
    return -visibility * abs(value)


def optimize_bell_settings(v: VisibilityLike, restarts: int = 8,
                           rng: Optional[np.random.Generator] = None) -> Tuple[BellSettings, float]:
    """
    Numerically maximize S3 over the six analyzer phases.

    Returns:
        Tuple[BellSettings, float]: Best settings found and their S3
    """
    vis = as_visibility(v).value
    generator = rng if rng is not None else np.random.default_rng(0)
    best_angles = None
    best_value = -math.inf
    for _ in range(max(1, restarts)):
        start = generator.uniform(0.0, TWO_PI, size=6)
        result = minimize(_negative_s3, start, args=(vis,), method='Nelder-Mead',
                          options={'xatol': 1e-12, 'fatol': 1e-14, 'maxiter': 20000})
        if -result.fun > best_value:
            best_value = -float(result.fun)
            best_angles = result.x
    assert best_angles is not None
    logger.debug(f"Optimized S3 = {best_value:.9f} at V = {vis}")
    return BellSettings.of(*best_angles), best_value


# ============================================================================
# RUN REPORT
# ============================================================================

@dataclass
class RunReport:
    """Aggregated result of a key-generation session."""
    n_pulses: int
    sifted_bits: int
    detected_rounds: int
    qber: Optional[float]
    qber_std: Optional[float]
    visibility: Optional[VisibilityEstimate]
    s_exp: Optional[float]
    bit_rate: float
    accidental_error_fraction: Optional[float]
    wall_time: float
    interference_visibility: float
    expected_qber: Optional[float] = None
    significance_three_party: Optional[float] = None
    significance_two_party: Optional[float] = None
    insufficient_statistics: bool = False

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.visibility is not None:
            data['visibility'] = self.visibility.value
            data['visibility_std'] = self.visibility.std_error
        else:
            data['visibility_std'] = None
        return data

    def format_text(self) -> str:
        """Plain-text summary."""
        def fmt(value: Optional[float], digits: int = 4) -> str:
            return 'n/a' if value is None else f"{value:.{digits}f}"

        lines = [
            "GHZ secret sharing session",
            f"pump slots:                {self.n_pulses}",
            f"wall time (s):             {fmt(self.wall_time, 3)}",
            f"detected rounds:           {self.detected_rounds}",
            f"sifted bits:               {self.sifted_bits}",
            f"bit rate (Hz):             {fmt(self.bit_rate, 3)}",
            f"QBER:                      {fmt(self.qber)} +- {fmt(self.qber_std)}",
            f"expected QBER:             {fmt(self.expected_qber)}",
        ]
        if self.visibility is not None:
            lines.append(f"visibility:                {fmt(self.visibility.value)} +- "
                         f"{fmt(self.visibility.std_error)}")
            for combo, (value, std) in sorted(self.visibility.per_combination.items()):
                lines.append(f"  combination {combo}:          {fmt(value)} +- {fmt(std)}")
        lines += [
            f"S_exp:                     {fmt(self.s_exp, 3)}",
            f"sigma above 3-party line:  {fmt(self.significance_three_party, 1)}",
            f"sigma above 2-party line:  {fmt(self.significance_two_party, 1)}",
            f"accidental error share:    {fmt(self.accidental_error_fraction, 3)}",
            f"interference visibility:   {fmt(self.interference_visibility)}",
        ]
        if self.insufficient_statistics:
            lines.append("WARNING: insufficient statistics")
        return "\n".join(lines) + "\n"


def build_run_report(n_pulses: int, pulse_rate: float, rounds: Sequence[Tuple[int, int, int, int]],
                     accidental: Sequence[bool], detected_rounds: int,
                     interference_visibility: float, expected_qber: Optional[float] = None,
                     min_sifted_bits: int = 1) -> RunReport:
    """
    Build a run report from sifted (i, j, k, l) rounds.

    Args:
        n_pulses: Simulated pump slots
        pulse_rate: Pump repetition rate in Hz, scales slots to wall time
        rounds: Sifted rounds as (i, j, k, l)
        accidental: Dark-click flag per sifted round
        detected_rounds: Rounds with a central triple coincidence
        interference_visibility: Visibility used for the coherent sector
        expected_qber: Analytic expectation, if known
        min_sifted_bits: Below this count the report flags insufficient statistics
    """
    wall_time = n_pulses / pulse_rate
    sifted = len(rounds)
    rate = bit_rate(sifted, wall_time)
    if sifted == 0 or sifted < min_sifted_bits:
        logger.warning(f"Insufficient statistics: {sifted} sifted bits (minimum {min_sifted_bits})")
        if sifted == 0:
            return RunReport(n_pulses=n_pulses, sifted_bits=0, detected_rounds=detected_rounds,
                             qber=None, qber_std=None, visibility=None, s_exp=None, bit_rate=rate,
                             accidental_error_fraction=None, wall_time=wall_time,
                             interference_visibility=interference_visibility,
                             expected_qber=expected_qber, insufficient_statistics=True)

    errors = [i * j * k * l != 1 for i, j, k, l in rounds]
    qber = sum(errors) / sifted
    qber_std = math.sqrt(qber * (1.0 - qber) / sifted)
    visibility = key_visibility(rounds)

    three = two = None
    if visibility.std_error > 0:
        three = sigma_distance(visibility.value, threshold_visibility(3), visibility.std_error)
        two = sigma_distance(visibility.value, threshold_visibility(2), visibility.std_error)

    return RunReport(
        n_pulses=n_pulses,
        sifted_bits=sifted,
        detected_rounds=detected_rounds,
        qber=qber,
        qber_std=qber_std,
        visibility=visibility,
        s_exp=s_from_visibility(min(max(visibility.value, 0.0), 1.0)),
        bit_rate=rate,
        accidental_error_fraction=accidental_error_fraction(errors, accidental),
        wall_time=wall_time,
        interference_visibility=interference_visibility,
        expected_qber=expected_qber,
        significance_three_party=three,
        significance_two_party=two,
        insufficient_statistics=sifted < min_sifted_bits,
    )
