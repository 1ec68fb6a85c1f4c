"""
Unit tests for the run registry.

This module tests:
- Schema initialization and path handling
- Recording runs with their flattened configuration
- Queries with filters and pagination
- Error handling and JSON sanitizing of summaries
"""

import json
import math
import sqlite3
from unittest.mock import patch

import numpy as np
import pytest

from ghzshare import database
from ghzshare.database import (
    DatabaseError,
    get_database_stats,
    get_db_connection,
    get_db_path,
    get_run,
    get_run_parameters,
    get_runs,
    initialize_database,
    insert_run,
    set_db_path,
    to_json,
)


def _insert(scenario='keygen', seed=7, status='ok', exit_code=0, parameters=None, summary=None):
    return insert_run(scenario, seed, status, exit_code, '/tmp/out', parameters or {'scenario.seed': str(seed)},
                      summary, 1.5)


@pytest.mark.database
class TestSchema:
    """Test database initialization."""

    def test_tables_created(self):
        with get_db_connection() as conn:
            names = {row['name'] for row in conn.execute("SELECT name FROM sqlite_master WHERE type='table'")}
        assert {'runs', 'run_parameters'} <= names

    def test_initialize_is_idempotent(self):
        _insert()
        initialize_database()
        assert len(get_runs()) == 1

    def test_set_db_path_strips_url(self, tmp_path):
        set_db_path(f"sqlite:///{tmp_path / 'other.db'}")
        assert get_db_path() == tmp_path / 'other.db'
        assert (tmp_path / 'other.db').exists()

    def test_unreachable_path(self, tmp_path):
        with pytest.raises(DatabaseError):
            set_db_path(tmp_path / 'missing' / 'dir' / 'registry.db')

    def test_connection_error_wrapped(self):
        with patch('ghzshare.database.sqlite3.connect', side_effect=sqlite3.OperationalError("locked")):
            with pytest.raises(DatabaseError):
                with get_db_connection():
                    pass


@pytest.mark.database
class TestRuns:
    """Test recording and querying runs."""

    def test_insert_and_get(self):
        run_id = _insert(seed=2 ** 64 - 1, summary={'qber': 0.039, 'sifted_bits': 24000})
        run = get_run(run_id)
        assert run['scenario'] == 'keygen'
        assert run['seed'] == 2 ** 64 - 1
        assert run['status'] == 'ok'
        assert run['summary'] == {'qber': 0.039, 'sifted_bits': 24000}
        assert run['duration_seconds'] == 1.5

    def test_parameters(self):
        run_id = _insert(parameters={'source.pulse_rate': '80000000.0', 'scenario.name': 'keygen'})
        assert get_run_parameters(run_id) == {'scenario.name': 'keygen', 'source.pulse_rate': '80000000.0'}

    def test_unknown_status(self):
        with pytest.raises(DatabaseError):
            _insert(status='maybe')

    def test_missing_run(self):
        assert get_run(999) is None
        assert get_run_parameters(999) == {}

    def test_newest_first_and_filters(self):
        first = _insert('keygen')
        second = _insert('fringe', status='insufficient_statistics', exit_code=3)
        third = _insert('keygen', status='failed', exit_code=2)
        assert [r['id'] for r in get_runs()] == [third, second, first]
        assert [r['id'] for r in get_runs(scenario='keygen')] == [third, first]
        assert [r['id'] for r in get_runs(status='insufficient_statistics')] == [second]
        assert [r['id'] for r in get_runs(limit=1, offset=1)] == [second]
        assert [r['id'] for r in get_runs(offset=2)] == [first]

    def test_stats(self):
        _insert(parameters={'a.b': '1', 'c.d': '2'})
        stats = get_database_stats()
        assert stats['run_records'] == 1
        assert stats['parameter_records'] == 2
        assert stats['database_size_bytes'] > 0
        assert stats['database_path'] == str(database.DB_PATH)


@pytest.mark.unit
class TestSummaryJson:
    """Test summary sanitizing."""

    def test_numpy_and_non_finite_values(self):
        text = to_json({'qber': np.float64(0.04), 'bits': np.int64(12), 'bad': math.nan,
                        'nested': {'inf': math.inf}, 'list': (1, 2)})
        data = json.loads(text)
        assert data == {'qber': 0.04, 'bits': 12, 'bad': None, 'nested': {'inf': None}, 'list': [1, 2]}
        assert 'NaN' not in text

    def test_other_objects_become_strings(self, tmp_path):
        assert json.loads(to_json({'path': tmp_path}))['path'] == str(tmp_path)
