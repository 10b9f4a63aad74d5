"""Run output storage."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import zstandard

from polmaser.physics.entanglement import ObservableRecord
from polmaser.physics.evolve import Trajectory

logger = logging.getLogger(__name__)

SERIES_HEADER = ("t", "log_neg", "n1", "n2", "purity", "cross_re", "cross_im", "trace_err", "min_eig", "leakage")
SWEEP_SUMMARY = ("peak_log_neg", "t_peak", "residual", "final_log_neg", "converged")
MANIFEST_NAME = "manifest.json"
SWEEP_NAME = "sweep.csv"


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".15g")
    return str(value)


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunOutputStore:
    def __init__(self, out_dir: Path) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / MANIFEST_NAME

    def _write_rows(self, path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
        path.write_text(buffer.getvalue(), encoding="utf-8")
        return path

    def save_records(self, name: str, records: Sequence[ObservableRecord]) -> Path:
        path = self.out_dir / f"{name}.csv"
        self._write_rows(path, SERIES_HEADER, [record.as_row() for record in records])
        logger.debug("series %s written to %s", name, path)
        return path

    def save_series(self, label: str, trajectory: Trajectory) -> Path:
        return self.save_records(label, trajectory.observables)

    def save_states(self, label: str, trajectory: Trajectory) -> Path | None:
        if trajectory.states is None:
            return None
        buffer = io.BytesIO()
        np.save(buffer, np.stack(trajectory.states), allow_pickle=False)
        path = self.out_dir / f"{label}.states.npy.zst"
        path.write_bytes(zstandard.ZstdCompressor(level=10).compress(buffer.getvalue()))
        return path

    @staticmethod
    def load_states(path: Path) -> np.ndarray:
        raw = zstandard.ZstdDecompressor().decompress(Path(path).read_bytes())
        return np.load(io.BytesIO(raw), allow_pickle=False)

    def save_manifest(self, manifest: Mapping[str, Any]) -> Path:
        self.manifest_path.write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return self.manifest_path

    def load_manifest(self) -> dict[str, Any] | None:
        if not self.manifest_path.exists():
            return None
        try:
            payload = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError, UnicodeDecodeError):
            logger.warning("ignoring unreadable manifest %s", self.manifest_path)
            return None
        return payload if isinstance(payload, dict) else None

    def save_sweep(self, axes: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
        header = [*axes, *SWEEP_SUMMARY]
        return self._write_rows(self.out_dir / SWEEP_NAME, header, [[row[key] for key in header] for row in rows])
