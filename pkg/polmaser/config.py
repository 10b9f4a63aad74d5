"""Process-level settings from the environment and an optional .env file."""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = "runs"
DEFAULT_MAX_WORKERS = 1
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_CUTOFF = 10
DEFAULT_CHUNK_SIZE = 25

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(slots=True, frozen=True)
class AppConfig:
    output_dir: Path
    max_workers: int
    log_level: str
    default_cutoff: int
    chunk_size: int


def _positive_int(name: str, default: int) -> int:
    raw = (os.getenv(name, "") or "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        logger.warning("%s=%r is not a positive integer, using %d", name, raw, default)
        return default
    return value


def _normalize_log_level(raw: str) -> str:
    value = (raw or "").strip().upper()
    if not value:
        return DEFAULT_LOG_LEVEL
    if value not in _LOG_LEVELS:
        logger.warning("POLMASER_LOG_LEVEL=%r is unknown, using %s", raw, DEFAULT_LOG_LEVEL)
        return DEFAULT_LOG_LEVEL
    return value


def _resolve_output_dir(raw: str) -> Path:
    value = (raw or "").strip()
    return Path(value).expanduser() if value else Path.cwd() / DEFAULT_OUTPUT_DIR


def _load_env_file() -> Path | None:
    """Loads the first ``.env`` found; variables already set in the process win."""
    candidates = [Path.cwd() / ".env"]
    if getattr(sys, "frozen", False):
        candidates.append(Path(sys.executable).resolve().parent / ".env")
    candidates.append(Path(__file__).resolve().parents[1] / ".env")

    found = next((path for path in candidates if path.is_file()), None)
    if found is not None:
        load_dotenv(found, override=False)
        logger.debug("environment loaded from %s", found)
    return found


def load_config() -> AppConfig:
    _load_env_file()
    return AppConfig(
        output_dir=_resolve_output_dir(os.getenv("POLMASER_OUTPUT_DIR", "")),
        max_workers=_positive_int("POLMASER_WORKERS", DEFAULT_MAX_WORKERS),
        log_level=_normalize_log_level(os.getenv("POLMASER_LOG_LEVEL", DEFAULT_LOG_LEVEL)),
        default_cutoff=_positive_int("POLMASER_DEFAULT_CUTOFF", DEFAULT_CUTOFF),
        chunk_size=_positive_int("POLMASER_MC_CHUNK", DEFAULT_CHUNK_SIZE),
    )
