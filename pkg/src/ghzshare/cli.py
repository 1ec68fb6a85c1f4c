#!/usr/bin/env python3
"""
GHZ-Share command line entry point.

Runs one scenario from an INI configuration and writes its artifacts:

    ghz-share --config configs/keygen.ini --seed 7 --out results/keygen

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
3 finished with insufficient statistics.
"""

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from .analysis import AnalysisError, InsufficientStatisticsError
from .config import (
    SCENARIOS, SEED_MAX, ConfigurationError, ScenarioConfig, apply_overrides, flatten,
    load_config, validate
)
from .correlations import CorrelationError
from .database import DatabaseError, insert_run, set_db_path
from .devices import DeviceError
from .engine import SimulationError
from .export import ExportError
from .protocol import ProtocolError
from .scenarios import ScenarioOutcome, run_scenario
from .source import SourceError

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_CONFIG = 1
EXIT_RUNTIME_FAILURE = 2
EXIT_INSUFFICIENT_STATISTICS = 3

RUNTIME_ERRORS = (SimulationError, ProtocolError, AnalysisError, DeviceError, SourceError,
                  CorrelationError, ExportError, OSError)

_STATUS = {
    EXIT_OK: 'ok',
    EXIT_INVALID_CONFIG: 'invalid_config',
    EXIT_RUNTIME_FAILURE: 'failed',
    EXIT_INSUFFICIENT_STATISTICS: 'insufficient_statistics',
}


@dataclass
class RunResult:
    """Exit code of a run together with what it produced."""
    exit_code: int
    diagnostics: List[str]
    outcome: Optional[ScenarioOutcome] = None
    run_id: Optional[int] = None

    @property
    def status(self) -> str:
        return _STATUS[self.exit_code]


def _check_output_path(config: ScenarioConfig) -> List[str]:
    out_dir = Path(config.cli.output_path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return [f"cli.output_path: not writable: {e}"]
    return []


def _record(config: ScenarioConfig, result: RunResult, duration: float) -> None:
    summary = result.outcome.summary if result.outcome else {'diagnostics': result.diagnostics}
    try:
        result.run_id = insert_run(config.scenario.name, config.scenario.seed, result.status,
                                   result.exit_code, config.cli.output_path, flatten(config),
                                   summary, duration)
    except DatabaseError as e:
        # the artifacts are already on disk
        logger.warning(f"Run not recorded: {e}")


def execute(config: ScenarioConfig, record: Optional[bool] = None) -> RunResult:
    """
    Validate and run a configuration, recording the run in the registry.

    Args:
        config: Resolved configuration
        record: Override of cli.record_run

    Returns:
        RunResult: Exit code, diagnostics and scenario outcome
    """
    started = time.monotonic()
    diagnostics = validate(config) or _check_output_path(config)
    if diagnostics:
        for line in diagnostics:
            logger.error(f"Invalid configuration: {line}")
        result = RunResult(EXIT_INVALID_CONFIG, diagnostics)
    else:
        try:
            outcome = run_scenario(config)
            code = EXIT_INSUFFICIENT_STATISTICS if outcome.insufficient_statistics else EXIT_OK
            if outcome.insufficient_statistics:
                logger.warning(f"Scenario {config.scenario.name} finished with insufficient statistics")
            result = RunResult(code, [], outcome)
        except InsufficientStatisticsError as e:
            logger.warning(f"Insufficient statistics: {e}")
            result = RunResult(EXIT_INSUFFICIENT_STATISTICS, [str(e)])
        except RUNTIME_ERRORS as e:
            logger.error(f"Scenario {config.scenario.name} failed: {e}")
            result = RunResult(EXIT_RUNTIME_FAILURE, [str(e)])

    if config.cli.record_run if record is None else record:
        _record(config, result, time.monotonic() - started)
    return result


def run(config: ScenarioConfig) -> int:
    """Run one scenario and return its exit code."""
    return execute(config).exit_code


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghz-share",
        description="Simulate three-party secret sharing with pseudo-GHZ states",
    )
    parser.add_argument("--config", "-c", type=Path, help="INI configuration file (defaults if omitted)")
    parser.add_argument("--seed", "-s", type=_seed, help="Override scenario.seed")
    parser.add_argument("--out", "-o", help="Override cli.output_path")
    parser.add_argument("--scenario", choices=SCENARIOS, help="Override scenario.name")
    parser.add_argument("--db", help="SQLite run registry (default ghzshare.db)")
    parser.add_argument("--no-record", action="store_true", help="Do not record the run")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the command line."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config) if args.config else ScenarioConfig()
        config = apply_overrides(config, scenario=args.scenario, seed=args.seed, output_path=args.out)
    except ConfigurationError as e:
        for line in e.diagnostics or [str(e)]:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INVALID_CONFIG

    record = config.cli.record_run and not args.no_record
    if record:
        try:
            set_db_path(args.db or 'ghzshare.db')
        except DatabaseError as e:
            logger.warning(f"Run registry unavailable, not recording: {e}")
            record = False

    result = execute(config, record=record)
    for line in result.diagnostics:
        print(f"{'error' if result.exit_code == EXIT_INVALID_CONFIG else 'warning'}: {line}",
              file=sys.stderr)
    if result.outcome:
        for artifact in result.outcome.artifacts:
            print(artifact)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
