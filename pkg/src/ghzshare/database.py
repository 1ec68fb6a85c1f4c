#!/usr/bin/env python3
"""
GHZ-Share Database Module

SQLite run registry:
- Connection handling and schema creation for the runs and
  run_parameters tables
- One row per scenario run (scenario, seed, status, summary, artifacts)
- The resolved configuration of each run as dotted key/value pairs
"""

import json
import logging
import math
import sqlite3
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Union

# Configure logging
logger = logging.getLogger(__name__)

# Database file path - created in the working directory
DB_PATH = Path("ghzshare.db")

RUN_STATUSES = ('ok', 'insufficient_statistics', 'invalid_config', 'failed')


class DatabaseError(Exception):
    """Custom exception for database operations."""
    pass


def get_db_path() -> Path:
    """Get the current database path."""
    return DB_PATH


def set_db_path(path: Union[str, Path]) -> None:
    """Set the database path and initialize the schema there."""
    global DB_PATH
    text = str(path)
    if text.startswith("sqlite:///"):
        text = text[10:]
    DB_PATH = Path(text)
    initialize_database()


@contextmanager
def get_db_connection(db_url: Optional[str] = None) -> Iterator[sqlite3.Connection]:
    """
    Context manager for database connections.

    Yields:
        sqlite3.Connection: Database connection object

    Raises:
        DatabaseError: If connection fails
    """
    conn = None
    db_to_connect = str(DB_PATH) if db_url is None else db_url
    if db_to_connect.startswith("sqlite:///"):
        db_to_connect = db_to_connect[10:]
    try:
        conn = sqlite3.connect(db_to_connect)
        conn.row_factory = sqlite3.Row
        yield conn
    except sqlite3.Error as e:
        logger.error(f"Database connection error: {e}")
        raise DatabaseError(f"Failed to connect to database: {e}")
    finally:
        if conn:
            conn.close()


def initialize_database(db_url: Optional[str] = None) -> None:
    """
    Create the runs and run_parameters tables if they don't exist.

    Raises:
        DatabaseError: If table creation fails
    """
    try:
        with get_db_connection(db_url) as conn:
            cursor = conn.cursor()
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    created_at TEXT NOT NULL,
                    scenario TEXT NOT NULL,
                    seed TEXT NOT NULL,
                    status TEXT NOT NULL,
                    exit_code INTEGER NOT NULL,
                    output_path TEXT NOT NULL,
                    duration_seconds REAL NOT NULL DEFAULT 0,
                    summary TEXT NOT NULL DEFAULT '{}'
                )
            """)
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS run_parameters (
                    run_id INTEGER NOT NULL REFERENCES runs(id) ON DELETE CASCADE,
                    key TEXT NOT NULL,
                    value TEXT NOT NULL,
                    PRIMARY KEY (run_id, key)
                )
            """)
            cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_scenario ON runs(scenario)")
            cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_created_at ON runs(created_at)")
            conn.commit()
            logger.info("Database initialized successfully")
    except sqlite3.Error as e:
        logger.error(f"Failed to initialize database: {e}")
        raise DatabaseError(f"Database initialization failed: {e}")


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, 'item'):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def to_json(summary: Mapping[str, Any]) -> str:
    """Summary as strict JSON; numpy scalars unwrapped, non-finite floats stored as null."""
    return json.dumps(_plain(summary), sort_keys=True)


def insert_run(scenario: str, seed: int, status: str, exit_code: int, output_path: str,
               parameters: Mapping[str, str], summary: Optional[Mapping[str, Any]] = None,
               duration_seconds: float = 0.0) -> int:
    """
    Record a finished run and its flattened configuration.

    Args:
        scenario: Scenario name
        seed: Seed of the run (stored as text, 64-bit unsigned)
        status: One of RUN_STATUSES
        exit_code: CLI exit code of the run
        output_path: Artifact directory
        parameters: Dotted configuration keys and values
        summary: JSON-serializable result summary
        duration_seconds: Wall time of the run

    Returns:
        int: ID of the inserted run

    Raises:
        DatabaseError: If insertion fails or the status is unknown
    """
    if status not in RUN_STATUSES:
        raise DatabaseError(f"Unknown run status: {status}")
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("""
                INSERT INTO runs (created_at, scenario, seed, status, exit_code, output_path,
                                  duration_seconds, summary)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            """, (datetime.now(timezone.utc).isoformat(), scenario, str(seed), status, exit_code,
                  output_path, duration_seconds, to_json(summary or {})))
            run_id = cursor.lastrowid
            if run_id is None:
                raise DatabaseError("Failed to get run ID after insertion")
            cursor.executemany(
                "INSERT INTO run_parameters (run_id, key, value) VALUES (?, ?, ?)",
                [(run_id, key, value) for key, value in sorted(parameters.items())],
            )
            conn.commit()
            logger.debug(f"Inserted run with ID: {run_id}")
            return run_id
    except sqlite3.Error as e:
        logger.error(f"Failed to insert run: {e}")
        raise DatabaseError(f"Failed to insert run: {e}")


def _row_to_run(row: sqlite3.Row) -> Dict[str, Any]:
    return {
        'id': row['id'],
        'created_at': row['created_at'],
        'scenario': row['scenario'],
        'seed': int(row['seed']),
        'status': row['status'],
        'exit_code': row['exit_code'],
        'output_path': row['output_path'],
        'duration_seconds': row['duration_seconds'],
        'summary': json.loads(row['summary']),
    }


def get_runs(limit: Optional[int] = None, offset: Optional[int] = None,
             scenario: Optional[str] = None, status: Optional[str] = None) -> List[Dict[str, Any]]:
    """
    Retrieve runs, newest first, with optional filtering.

    Raises:
        DatabaseError: If query fails
    """
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()
            query = "SELECT * FROM runs WHERE 1=1"
            params: List[Any] = []
            if scenario:
                query += " AND scenario = ?"
                params.append(scenario)
            if status:
                query += " AND status = ?"
                params.append(status)
            query += " ORDER BY id DESC"
            if limit:
                query += " LIMIT ?"
                params.append(limit)
                if offset:
                    query += " OFFSET ?"
                    params.append(offset)
            elif offset:
                query += " LIMIT -1 OFFSET ?"
                params.append(offset)
            cursor.execute(query, params)
            result = [_row_to_run(row) for row in cursor.fetchall()]
            logger.debug(f"Retrieved {len(result)} runs")
            return result
    except sqlite3.Error as e:
        logger.error(f"Failed to retrieve runs: {e}")
        raise DatabaseError(f"Failed to retrieve runs: {e}")


def get_run(run_id: int) -> Optional[Dict[str, Any]]:
    """Get one run by ID, or None if it doesn't exist."""
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
            row = cursor.fetchone()
            return _row_to_run(row) if row else None
    except sqlite3.Error as e:
        logger.error(f"Failed to get run {run_id}: {e}")
        raise DatabaseError(f"Failed to get run {run_id}: {e}")


def get_run_parameters(run_id: int) -> Dict[str, str]:
    """Dotted configuration keys of a run."""
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT key, value FROM run_parameters WHERE run_id = ? ORDER BY key", (run_id,))
            return {row['key']: row['value'] for row in cursor.fetchall()}
    except sqlite3.Error as e:
        logger.error(f"Failed to get parameters of run {run_id}: {e}")
        raise DatabaseError(f"Failed to get parameters of run {run_id}: {e}")


def get_database_stats() -> Dict[str, Any]:
    """
    Get database statistics for monitoring.

    Raises:
        DatabaseError: If query fails
    """
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT COUNT(*) as count FROM runs")
            run_count = cursor.fetchone()['count']
            cursor.execute("SELECT COUNT(*) as count FROM run_parameters")
            parameter_count = cursor.fetchone()['count']
            db_size = DB_PATH.stat().st_size if DB_PATH.exists() else 0
            return {
                'run_records': run_count,
                'parameter_records': parameter_count,
                'database_size_bytes': db_size,
                'database_path': str(DB_PATH),
            }
    except (sqlite3.Error, OSError) as e:
        logger.error(f"Failed to get database stats: {e}")
        raise DatabaseError(f"Failed to get database stats: {e}")
