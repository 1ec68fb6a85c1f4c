"""
Pytest configuration and fixtures for GHZ-Share tests.
"""

import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ghzshare.api import create_app
from ghzshare.config import ScenarioConfig, build_config
from ghzshare.devices import DetectorParams
from ghzshare.source import SourceParams


@pytest.fixture(scope="function")
def test_database_url(tmp_path):
    """Provide a temporary database URL for each test function."""
    db_path = tmp_path / "test.db"
    return f"sqlite:///{db_path}"


@pytest.fixture(autouse=True)
def cleanup_database(test_database_url):
    """Point the run registry at a fresh temporary database for every test."""
    from ghzshare.database import set_db_path

    db_path = test_database_url.replace("sqlite:///", "")
    if os.path.exists(db_path):
        os.remove(db_path)

    set_db_path(test_database_url)

    yield

    if os.path.exists(db_path):
        os.remove(db_path)


@pytest.fixture(scope="function")
def app(test_database_url, tmp_path):
    """Create a test instance of the FastAPI application."""
    return create_app(db_path=test_database_url, results_root=str(tmp_path / "results"))


@pytest.fixture
def client(app):
    """Create a test client for the FastAPI application."""
    with TestClient(app) as client:
        yield client


@pytest.fixture
def rng():
    """Seeded generator for statistical tests."""
    return np.random.default_rng(20240601)


@pytest.fixture
def lab_source():
    """Laboratory source parameters."""
    return SourceParams()


@pytest.fixture
def lab_detectors():
    """Laboratory detector parameters."""
    return DetectorParams()


@pytest.fixture
def ideal_detectors():
    """Unit-efficiency detectors without dark counts or timing errors."""
    return DetectorParams(efficiency=1.0, dark_rate=0.0)


@pytest.fixture
def small_config(tmp_path) -> ScenarioConfig:
    """Keygen configuration small enough for unit tests, writing into tmp_path."""
    return build_config({
        'scenario': {'name': 'keygen', 'seed': 7, 'n_pulses': 2_000_000_000},
        'cli': {'output_path': str(tmp_path / 'out')},
    })


@pytest.fixture
def ini_file(tmp_path):
    """Write an INI configuration and return its path."""
    def write(text: str, name: str = 'scenario.ini'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path
    return write
