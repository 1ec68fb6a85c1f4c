#!/usr/bin/env python3
"""
GHZ-Share Configuration Module

Scenario configuration:
- Pydantic models with one section per module and laboratory defaults
- INI files read with configparser; unknown sections and keys are reported
- Cross-field physical checks delegated to each module's problems()
- Flattening to dotted keys for the run registry
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .devices import CalibrationError, DetectorParams, calibrate_interference_visibility
from .protocol import EveConfig, EveStrategy, EveTarget
from .source import SourceParams

# Configure logging
logger = logging.getLogger(__name__)

SCENARIOS = ('fringe', 'keygen', 'belltest', 'eavesdrop')
SEED_MAX = 2 ** 64 - 1


class ConfigurationError(Exception):
    """Custom exception for configuration errors, carrying field-level diagnostics."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ScenarioSection(_Section):
    name: Literal['fringe', 'keygen', 'belltest', 'eavesdrop'] = 'keygen'
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    n_pulses: int = Field(default=8_000_000_000, ge=1)
    block_pulses: int = Field(default=10_000_000_000, ge=1)
    workers: int = Field(default=1, ge=0, description="0 uses the physical core count")
    min_sifted_bits: int = Field(default=1, ge=0)


class CorrelationsSection(_Section):
    visibility: float = Field(default=0.922, ge=0.0, le=1.0)
    calibrate: bool = True


class SourceSection(_Section):
    pulse_rate: float = Field(default=8.0e7, gt=0)
    pair_prob_per_slot: float = Field(default=6.4e-4, ge=0.0, le=1.0)
    delay: float = Field(default=1.2e-9, gt=0)
    pulse_width: float = Field(default=6.0e-10, gt=0)

    def to_params(self) -> SourceParams:
        return SourceParams(pulse_rate=self.pulse_rate, pair_prob_per_slot=self.pair_prob_per_slot,
                            delay=self.delay, pulse_width=self.pulse_width)


class DevicesSection(_Section):
    efficiency: float = Field(default=0.05, ge=0.0, le=1.0)
    efficiency_plus: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    efficiency_minus: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    dark_rate: float = Field(default=3.0e4, ge=0.0)
    gate_window: float = Field(default=1.25e-8, gt=0)
    bin_width: float = Field(default=1.2e-9, gt=0)
    bin_jitter_prob: float = Field(default=0.0, ge=0.0, le=1.0)

    def to_params(self) -> DetectorParams:
        port_efficiency: Optional[Tuple[float, float]] = None
        if self.efficiency_plus is not None or self.efficiency_minus is not None:
            port_efficiency = (
                self.efficiency if self.efficiency_plus is None else self.efficiency_plus,
                self.efficiency if self.efficiency_minus is None else self.efficiency_minus,
            )
        return DetectorParams(efficiency=self.efficiency, dark_rate=self.dark_rate,
                              gate_window=self.gate_window, bin_width=self.bin_width,
                              port_efficiency=port_efficiency, bin_jitter_prob=self.bin_jitter_prob)


class ProtocolSection(_Section):
    eve_strategy: Literal['none', 'time_basis_intercept'] = 'none'
    interception_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    eve_target: Literal['bob_channel', 'charly_channel'] = 'bob_channel'
    sweep: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])

    @field_validator('sweep', mode='before')
    @classmethod
    def _split_sweep(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [item.strip() for item in value.split(',') if item.strip()]
        return value

    @field_validator('sweep')
    @classmethod
    def _check_sweep(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("sweep must contain at least one interception probability")
        for p in value:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"sweep values must be probabilities, got {p}")
        return value

    def to_eve(self, interception_prob: Optional[float] = None) -> EveConfig:
        return EveConfig(strategy=EveStrategy(self.eve_strategy),
                         interception_prob=self.interception_prob if interception_prob is None else interception_prob,
                         target=EveTarget(self.eve_target))


class AnalysisSection(_Section):
    scan_points: int = Field(default=16, ge=8)
    scan_duration: float = Field(default=100.0, gt=0, description="seconds per scan point")
    scan_beta: float = 0.0
    scan_gamma: float = 0.0


class CliSection(_Section):
    output_path: str = 'results'
    write_transcript: bool = True
    record_run: bool = True


class ScenarioConfig(_Section):
    """Resolved configuration of one scenario run."""
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    correlations: CorrelationsSection = Field(default_factory=CorrelationsSection)
    source: SourceSection = Field(default_factory=SourceSection)
    devices: DevicesSection = Field(default_factory=DevicesSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    cli: CliSection = Field(default_factory=CliSection)

    @property
    def workers(self) -> Optional[int]:
        return None if self.scenario.workers == 0 else self.scenario.workers


def _diagnostics(error: ValidationError) -> List[str]:
    return [f"{'.'.join(str(part) for part in item['loc'])}: {item['msg']}" for item in error.errors()]


def build_config(data: Mapping[str, Mapping[str, Any]]) -> ScenarioConfig:
    """
    Validate nested section data into a ScenarioConfig.

    Raises:
        ConfigurationError: With one diagnostic per invalid field
    """
    try:
        return ScenarioConfig.model_validate(dict(data))
    except ValidationError as e:
        diagnostics = _diagnostics(e)
        logger.error(f"Invalid configuration: {'; '.join(diagnostics)}")
        raise ConfigurationError("Invalid configuration", diagnostics)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    Load an INI configuration file.

    Raises:
        ConfigurationError: If the file cannot be read or does not validate
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as e:
        logger.error(f"Failed to read configuration {path}: {e}")
        raise ConfigurationError(f"Failed to read configuration {path}: {e}", [f"file: {e}"])

    data = {section: dict(parser.items(section)) for section in parser.sections()}
    logger.info(f"Loaded configuration from {path}")
    return build_config(data)


def apply_overrides(config: ScenarioConfig, scenario: Optional[str] = None, seed: Optional[int] = None,
                    output_path: Optional[str] = None) -> ScenarioConfig:
    """Return a copy with command-line overrides applied and revalidated."""
    data = config.model_dump()
    if scenario is not None:
        data['scenario']['name'] = scenario
    if seed is not None:
        data['scenario']['seed'] = seed
    if output_path is not None:
        data['cli']['output_path'] = output_path
    return build_config(data)


def validate(config: ScenarioConfig) -> List[str]:
    """
    Physical invariants across fields.

    Returns:
        List[str]: Diagnostics, empty iff the configuration is runnable
    """
    source = config.source.to_params()
    detectors = config.devices.to_params()
    issues = [f"source.{p}" for p in source.problems()]
    issues += [f"devices.{p}" for p in detectors.problems()]
    issues += [f"protocol.{p}" for p in config.protocol.to_eve().problems()]
    if not issues and config.correlations.calibrate:
        try:
            calibrate_interference_visibility(config.correlations.visibility, source, detectors)
        except CalibrationError as e:
            issues.append(f"correlations.visibility: {e}")
    return issues


def flatten(config: ScenarioConfig) -> Dict[str, str]:
    """Dotted keys such as 'source.pulse_rate' mapped to string values."""
    flat = {}
    for section, values in config.model_dump().items():
        for key, value in values.items():
            if isinstance(value, list):
                value = ','.join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            flat[f"{section}.{key}"] = '' if value is None else str(value)
    return flat


def to_ini(config: ScenarioConfig) -> str:
    """Render a configuration as INI text that load_config reads back."""
    parser = configparser.ConfigParser(interpolation=None)
    for dotted, value in flatten(config).items():
        section, key = dotted.split('.', 1)
        if value == '':
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in parser.items(section))
        lines.append('')
    return "\n".join(lines)
