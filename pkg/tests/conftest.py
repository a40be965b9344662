import numpy as np
import pytest

from src.infra.scenario_store import load_scenario


@pytest.fixture
def builtin():
    return load_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Run CLI commands with logs and outputs under a temporary directory."""
    monkeypatch.chdir(tmp_path)
    return tmp_path
