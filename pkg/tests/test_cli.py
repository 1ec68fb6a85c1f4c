"""
Tests for the command line: argument parsing, exit codes and run recording.
"""

import pytest

from ghzshare.cli import (
    EXIT_INSUFFICIENT_STATISTICS,
    EXIT_INVALID_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME_FAILURE,
    build_parser,
    execute,
    main,
    run,
)
from ghzshare.config import build_config
from ghzshare.database import DatabaseError, get_run, get_run_parameters, get_runs
from ghzshare.engine import SimulationError


@pytest.mark.unit
class TestParser:
    """Argument parsing."""

    def test_seed_accepts_hex(self):
        args = build_parser().parse_args(["--seed", "0xff"])
        assert args.seed == 255

    def test_seed_range(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--seed", str(2 ** 64)])
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--seed", "-1"])

    def test_unknown_scenario(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--scenario", "teleport"])


@pytest.mark.integration
class TestExecute:
    """Exit codes of execute() and run()."""

    def test_success_is_recorded(self, small_config):
        result = execute(small_config)
        assert result.exit_code == EXIT_OK
        assert result.status == 'ok'
        stored = get_run(result.run_id)
        assert stored['scenario'] == 'keygen'
        assert stored['seed'] == 7
        assert stored['summary']['sifted_bits'] == result.outcome.summary['sifted_bits']
        assert get_run_parameters(result.run_id)['scenario.n_pulses'] == '2000000000'

    def test_invalid_configuration(self, tmp_path):
        config = build_config({'source': {'pair_prob_per_slot': 0.5},
                               'cli': {'output_path': str(tmp_path / 'out')}})
        result = execute(config)
        assert result.exit_code == EXIT_INVALID_CONFIG
        assert any(d.startswith('source.pair_prob_per_slot') for d in result.diagnostics)
        assert get_run(result.run_id)['status'] == 'invalid_config'
        assert not (tmp_path / 'out').exists()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / 'file'
        blocker.write_text('x', encoding='utf-8')
        config = build_config({'cli': {'output_path': str(blocker / 'out')}})
        result = execute(config, record=False)
        assert result.exit_code == EXIT_INVALID_CONFIG
        assert result.diagnostics[0].startswith('cli.output_path')
        assert result.run_id is None

    def test_insufficient_statistics(self, tmp_path):
        config = build_config({'scenario': {'n_pulses': 1_000_000, 'min_sifted_bits': 10},
                               'cli': {'output_path': str(tmp_path / 'out')}})
        assert run(config) == EXIT_INSUFFICIENT_STATISTICS
        assert get_runs()[0]['status'] == 'insufficient_statistics'

    def test_runtime_failure(self, small_config, mocker):
        mocker.patch('ghzshare.cli.run_scenario', side_effect=SimulationError("block failed"))
        result = execute(small_config)
        assert result.exit_code == EXIT_RUNTIME_FAILURE
        assert result.diagnostics == ["block failed"]
        assert get_run(result.run_id)['status'] == 'failed'

    def test_registry_failure_keeps_exit_code(self, small_config, mocker):
        mocker.patch('ghzshare.cli.insert_run', side_effect=DatabaseError("read-only"))
        result = execute(small_config)
        assert result.exit_code == EXIT_OK
        assert result.run_id is None

    def test_recording_disabled(self, tmp_path):
        config = build_config({'scenario': {'n_pulses': 1_000_000},
                               'cli': {'output_path': str(tmp_path / 'out'), 'record_run': False}})
        execute(config)
        assert get_runs() == []


@pytest.mark.integration
class TestMain:
    """The ghz-share entry point."""

    def test_main_with_ini(self, ini_file, tmp_path, capsys):
        path = ini_file("[scenario]\nname = keygen\nn_pulses = 1000000000\n")
        db = tmp_path / 'runs.db'
        code = main(["--config", str(path), "--seed", "3", "--out", str(tmp_path / 'res'), "--db", str(db)])
        assert code == EXIT_OK
        printed = capsys.readouterr().out.splitlines()
        assert str(tmp_path / 'res' / 'keys.csv') in printed
        assert db.exists()
        assert get_runs()[0]['seed'] == 3

    def test_main_reports_config_errors(self, ini_file, capsys):
        path = ini_file("[source]\npump_power = 3\n")
        assert main(["--config", str(path), "--no-record"]) == EXIT_INVALID_CONFIG
        assert "error: source.pump_power" in capsys.readouterr().err

    def test_main_missing_config(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / 'none.ini'), "--no-record"]) == EXIT_INVALID_CONFIG
        assert "error: file" in capsys.readouterr().err

    def test_main_physical_errors(self, ini_file, tmp_path, capsys):
        path = ini_file("[devices]\nbin_width = 5e-9\n")
        code = main(["--config", str(path), "--out", str(tmp_path / 'res'), "--no-record"])
        assert code == EXIT_INVALID_CONFIG
        assert "error: devices.bin_width" in capsys.readouterr().err

    def test_main_unavailable_registry(self, ini_file, tmp_path):
        path = ini_file("[scenario]\nn_pulses = 1000000\n")
        code = main(["--config", str(path), "--out", str(tmp_path / 'res'),
                     "--db", str(tmp_path / 'missing' / 'runs.db')])
        assert code == EXIT_INSUFFICIENT_STATISTICS
