from __future__ import annotations

import logging
from pathlib import Path

import pytest

from polmaser import config as config_module
from polmaser.config import DEFAULT_CHUNK_SIZE, DEFAULT_CUTOFF, load_config

REAL_LOAD_ENV_FILE = config_module._load_env_file

ENV_VARS = (
    "POLMASER_OUTPUT_DIR",
    "POLMASER_WORKERS",
    "POLMASER_LOG_LEVEL",
    "POLMASER_DEFAULT_CUTOFF",
    "POLMASER_MC_CHUNK",
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    for name in ENV_VARS:
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(config_module, "_load_env_file", lambda: None)


def test_defaults(tmp_path):
    config = load_config()
    assert config.output_dir == tmp_path / "runs"
    assert config.max_workers == 1
    assert config.log_level == "INFO"
    assert config.default_cutoff == DEFAULT_CUTOFF
    assert config.chunk_size == DEFAULT_CHUNK_SIZE


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("POLMASER_OUTPUT_DIR", "~/maser-runs")
    monkeypatch.setenv("POLMASER_WORKERS", "4")
    monkeypatch.setenv("POLMASER_LOG_LEVEL", "debug")
    monkeypatch.setenv("POLMASER_DEFAULT_CUTOFF", "6")
    monkeypatch.setenv("POLMASER_MC_CHUNK", "10")
    config = load_config()
    assert config.output_dir == Path("~/maser-runs").expanduser()
    assert config.max_workers == 4
    assert config.log_level == "DEBUG"
    assert config.default_cutoff == 6
    assert config.chunk_size == 10


@pytest.mark.parametrize("raw", ["0", "-3", "many"])
def test_bad_worker_count_falls_back(monkeypatch, caplog, raw):
    monkeypatch.setenv("POLMASER_WORKERS", raw)
    with caplog.at_level(logging.WARNING):
        assert load_config().max_workers == 1
    assert "POLMASER_WORKERS" in caplog.text


def test_unknown_log_level_falls_back(monkeypatch, caplog):
    monkeypatch.setenv("POLMASER_LOG_LEVEL", "chatty")
    with caplog.at_level(logging.WARNING):
        assert load_config().log_level == "INFO"


def test_env_file_in_working_directory(monkeypatch, tmp_path):
    monkeypatch.setattr(config_module, "_load_env_file", REAL_LOAD_ENV_FILE)
    # registered so the value loaded from the file is removed afterwards
    monkeypatch.setenv("POLMASER_WORKERS", "")
    monkeypatch.delenv("POLMASER_WORKERS")
    (tmp_path / ".env").write_text("POLMASER_WORKERS=3\n", encoding="utf-8")
    assert load_config().max_workers == 3
