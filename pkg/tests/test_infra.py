import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.config import Settings
from src.infra.persistence import SCHEMA, OutputWriter, RunManifest, dumps, load_manifest


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("PMP_QOC_THREADS", "4")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    s = Settings(_env_file=None)
    assert s.PMP_QOC_THREADS == 4
    assert s.LOG_LEVEL == "DEBUG"
    assert s.LOG_FILE == "logs/runtime.log"


@pytest.mark.parametrize(
    "name,value", [("PMP_QOC_THREADS", "0"), ("LOG_LEVEL", "LOUD"), ("PHI_TOL", "2"), ("DEFAULT_SEED", "-1")]
)
def test_settings_reject_bad_values(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ValidationError):
        Settings(_env_file=None)


def test_json_payloads_carry_the_schema_and_plain_numbers():
    body = json.loads(dumps({"z": np.complex128(1 + 2j), "v": np.arange(3), "n": np.int64(5), "x": float("nan")}))
    assert body["schema"] == SCHEMA
    assert body["z"] == [1.0, 2.0]
    assert body["v"] == [0, 1, 2]
    assert body["n"] == 5
    assert np.isnan(body["x"])


def test_csv_uses_full_precision_and_crlf(tmp_path):
    writer = OutputWriter(tmp_path / "run")
    writer.csv("values.csv", pd.DataFrame({"t": [0.1, 1.0 / 3.0]}))
    raw = (tmp_path / "run" / "values.csv").read_bytes()
    assert raw == b"t\r\n0.10000000000000001\r\n0.33333333333333331\r\n"
    assert not list((tmp_path / "run").glob("*.tmp"))


def test_manifest_lists_outputs_and_round_trips(tmp_path):
    writer = OutputWriter(tmp_path)
    writer.json("a.json", {"k": 1})
    manifest = RunManifest("check", "spin-p1", {"samples": 5}, str(tmp_path), seed=3, exit_code=0)
    path = manifest.write(writer)
    again = load_manifest(path)
    assert again.outputs == ["a.json"]
    assert again.seed == 3
    assert again.parameters == {"samples": 5}
