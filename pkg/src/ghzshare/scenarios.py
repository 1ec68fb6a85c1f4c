#!/usr/bin/env python3
"""
GHZ-Share Scenarios Module

Drivers for the four experiments:
- fringe: phase scan of Alice's interferometer and fringe fits
- keygen: key-generation session with transcript, keys and report
- belltest: correlation values at the optimal Bell settings and S_exp
- eavesdrop: QBER versus interception probability
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np

from .analysis import (
    FringePoint, FringeScan, InsufficientStatisticsError, MeasuredRound, combo_label,
    correlation_table, fit_fringe, s3_std_error, s_from_visibility
)
from .config import ScenarioConfig
from .correlations import OPTIMAL_BELL_SETTINGS, Phase, PhaseSettings, s3, s3_for_settings
from .engine import CentralEvents, ShardedSimulator, SimulationModel, constant_sampler
from .export import (
    write_e_values, write_fringe, write_fringe_fit, write_keys, write_report, write_spectra,
    write_sweep, write_text, write_transcript
)
from .protocol import interference_visibility_for, run_session, sweep_interception

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class ScenarioOutcome:
    """Summary of a finished scenario."""
    scenario: str
    artifacts: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    insufficient_statistics: bool = False


def _model(config: ScenarioConfig) -> SimulationModel:
    source = config.source.to_params()
    detectors = config.devices.to_params()
    interference = interference_visibility_for(config.correlations.visibility, source, detectors,
                                               config.correlations.calibrate)
    return SimulationModel(source=source, detectors=detectors, interference_visibility=interference)


def _session_options(config: ScenarioConfig) -> Dict[str, Any]:
    return {
        'calibrate': config.correlations.calibrate,
        'workers': config.workers,
        'block_pulses': config.scenario.block_pulses,
        'min_sifted_bits': config.scenario.min_sifted_bits,
    }


def run_fringe(config: ScenarioConfig, out_dir: Path) -> ScenarioOutcome:
    """Scan Alice's phase over one period at fixed beta and gamma."""
    model = _model(config)
    analysis = config.analysis
    n_slots = max(1, int(round(analysis.scan_duration * model.source.pulse_rate)))
    seeds = np.random.SeedSequence(config.scenario.seed).spawn(analysis.scan_points)

    points = []
    for n in range(analysis.scan_points):
        phase = Phase(2.0 * math.pi * n / analysis.scan_points)
        settings = PhaseSettings(phase, Phase(analysis.scan_beta), Phase(analysis.scan_gamma))
        simulator = ShardedSimulator(model, constant_sampler(settings),
                                     block_pulses=config.scenario.block_pulses, workers=config.workers)
        result = simulator.run(n_slots, seeds[n])
        counts = {combo_label(j, k): count for (j, k), count in result.events.port_counts().items()}
        points.append(FringePoint(phase=phase, counts=counts, duration=analysis.scan_duration))
        logger.debug(f"Scan point {n}: phase {phase.value:.4f}, counts {counts}")

    scan = FringeScan(points=points)
    fit = fit_fringe(scan)
    summary = {
        'visibility': fit.visibility.value,
        'visibility_std': fit.visibility.std_error,
        'interference_visibility': model.interference_visibility,
    }
    lines = [f"fringe fit over {len(points)} points of {analysis.scan_duration} s",
             f"mean visibility: {fit.visibility.value:.4f} +- {fit.visibility.std_error:.4f}"]
    for combo, combo_fit in fit.combos.items():
        lines.append(f"  {combo}: V={combo_fit.visibility:.4f} +- {combo_fit.visibility_std:.4f}, "
                     f"offset={combo_fit.offset:.1f}, phase0={combo_fit.phase0:.4f}"
                     + ("" if combo_fit.phase0_reliable else " (phase0 unreliable)"))
    artifacts = [
        write_fringe(out_dir / 'fringe.csv', scan),
        write_fringe_fit(out_dir / 'fringe_fit.csv', fit.combos, fit.visibility),
        write_text(out_dir / 'report.txt', "\n".join(lines) + "\n"),
    ]
    return ScenarioOutcome(scenario='fringe', artifacts=artifacts, summary=summary)


def run_keygen(config: ScenarioConfig, out_dir: Path) -> ScenarioOutcome:
    """Key-generation session."""
    result = run_session(config.scenario.n_pulses, config.source.to_params(),
                         config.devices.to_params(), config.correlations.visibility,
                         config.protocol.to_eve(), config.scenario.seed, **_session_options(config))
    artifacts = []
    if config.cli.write_transcript:
        artifacts.append(write_transcript(out_dir / 'transcript.csv', result.transcript))
    artifacts.append(write_transcript(out_dir / 'transcript_public.csv', result.transcript, public=True))
    artifacts.append(write_keys(out_dir / 'keys.csv', result.sifted))
    if result.spectra:
        artifacts.append(write_spectra(out_dir / 'spectra.csv', result.spectra))
    artifacts.extend(write_report(out_dir, result.report))
    return ScenarioOutcome(scenario='keygen', artifacts=artifacts, summary=result.report.to_dict(),
                           insufficient_statistics=result.report.insufficient_statistics)


def _measured_rounds(settings: PhaseSettings, events: CentralEvents) -> List[MeasuredRound]:
    return [MeasuredRound(settings, int(j), int(k)) for j, k in zip(events.j, events.k)]


def run_belltest(config: ScenarioConfig, out_dir: Path) -> ScenarioOutcome:
    """Correlation values at the four optimal settings, n_pulses slots each."""
    model = _model(config)
    bell = OPTIMAL_BELL_SETTINGS
    seeds = np.random.SeedSequence(config.scenario.seed).spawn(4)
    rounds: List[MeasuredRound] = []
    for n, settings in enumerate(bell.combinations()):
        simulator = ShardedSimulator(model, constant_sampler(settings),
                                     block_pulses=config.scenario.block_pulses, workers=config.workers)
        rounds.extend(_measured_rounds(settings, simulator.run(config.scenario.n_pulses, seeds[n]).events))

    try:
        table = correlation_table(rounds, bell)
    except InsufficientStatisticsError as e:
        logger.warning(f"Bell test incomplete: {e}")
        text = write_text(out_dir / 'report.txt', f"Bell test incomplete: {e}\n")
        return ScenarioOutcome(scenario='belltest', artifacts=[text], insufficient_statistics=True)

    s_exp = s3(*(e.value for e in table))
    s_std = s3_std_error(table)
    summary = {
        's_exp': s_exp,
        's_exp_std': s_std,
        's_predicted': s3_for_settings(bell, config.correlations.visibility),
        's_from_visibility': s_from_visibility(config.correlations.visibility),
        'rounds': sum(e.rounds for e in table),
    }
    lines = [f"E{n + 1} = {e.value:.4f} +- {e.std_error:.4f} ({e.rounds} rounds)" for n, e in enumerate(table)]
    lines += [f"S_exp = {s_exp:.4f} +- {s_std:.4f}",
              f"4 V = {summary['s_from_visibility']:.4f}",
              "local bound 2, quantum bound 4"]
    artifacts = [
        write_e_values(out_dir / 'e_values.csv', table),
        write_text(out_dir / 'report.txt', "\n".join(lines) + "\n"),
    ]
    return ScenarioOutcome(scenario='belltest', artifacts=artifacts, summary=summary,
                           insufficient_statistics=any(e.rounds < 2 for e in table))


def run_eavesdrop(config: ScenarioConfig, out_dir: Path) -> ScenarioOutcome:
    """QBER for each interception probability of the configured sweep."""
    eve = config.protocol.to_eve()
    points = sweep_interception(config.protocol.sweep, config.scenario.n_pulses,
                                config.source.to_params(), config.devices.to_params(),
                                config.correlations.visibility, target=eve.target,
                                seed=config.scenario.seed, **_session_options(config))
    lines = ["interception_prob  sifted_bits  qber"]
    for p in points:
        qber = 'n/a' if p.qber is None else f"{p.qber:.4f}"
        lines.append(f"{p.interception_prob:<17}  {p.sifted_bits:<11}  {qber}")
    artifacts = [
        write_sweep(out_dir / 'eavesdrop_sweep.csv', points),
        write_text(out_dir / 'report.txt', "\n".join(lines) + "\n"),
    ]
    summary = {f"qber_p{p.interception_prob}": p.qber for p in points}
    insufficient = any(p.sifted_bits < max(1, config.scenario.min_sifted_bits) for p in points)
    return ScenarioOutcome(scenario='eavesdrop', artifacts=artifacts, summary=summary,
                           insufficient_statistics=insufficient)


SCENARIO_RUNNERS: Dict[str, Callable[[ScenarioConfig, Path], ScenarioOutcome]] = {
    'fringe': run_fringe,
    'keygen': run_keygen,
    'belltest': run_belltest,
    'eavesdrop': run_eavesdrop,
}


def run_scenario(config: ScenarioConfig) -> ScenarioOutcome:
    """Run the configured scenario and write its artifacts to the output path."""
    out_dir = Path(config.cli.output_path)
    name = config.scenario.name
    logger.info(f"Running scenario {name} with seed {config.scenario.seed} into {out_dir}")
    outcome = SCENARIO_RUNNERS[name](config, out_dir)
    logger.info(f"Scenario {name} wrote {len(outcome.artifacts)} artifact(s)")
    return outcome
