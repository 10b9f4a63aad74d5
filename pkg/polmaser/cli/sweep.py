"""The ``sweep`` command: summary rows over a grid of at most two config axes."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from polmaser import __version__
from polmaser.cli.simulate import run_series
from polmaser.errors import ConfigError
from polmaser.models import RunConfig, apply_overrides, parse_scalar
from polmaser.physics.entanglement import log_negativity
from polmaser.physics.evolve import steady_state_probe
from polmaser.services.output_store import RunOutputStore
from polmaser.workers import Worker, gather

logger = logging.getLogger(__name__)

MAX_AXES = 2


@dataclass(slots=True, frozen=True)
class SweepAxis:
    """One axis; several ``+``-joined keys move together (``interaction.g1+interaction.g2``)."""

    keys: tuple[str, ...]
    values: tuple[Any, ...]

    @property
    def name(self) -> str:
        return "+".join(self.keys)

    @classmethod
    def parse(cls, text: str) -> "SweepAxis":
        name, sep, raw = text.partition("=")
        keys = tuple(key.strip() for key in name.split("+"))
        if not sep or not all(keys):
            raise ConfigError(f"axis {text!r} is not of the form key[+key]=v1,v2,...", field=name.strip() or None)
        values = tuple(parse_scalar(item) for item in raw.split(",") if item.strip())
        if not values:
            raise ConfigError("axis has no values", field=name.strip())
        for key in keys:
            if key == "series" or key.startswith("series."):
                raise ConfigError("series cannot be swept", field=key)
        return cls(keys=keys, values=values)


def _point_overrides(axes: tuple[SweepAxis, ...], point: tuple[Any, ...]) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for axis, value in zip(axes, point):
        for key in axis.keys:
            overrides[key] = value
    return overrides


def sweep_point(config: RunConfig) -> dict[str, Any]:
    trajectory = run_series(config)
    peak, t_peak = trajectory.peak_log_neg()
    final, residual = steady_state_probe(
        config.generator_spec(),
        config.initial.density(config.cutoff),
        config.grid.t_end,
        config.solver,
    )
    return {
        "peak_log_neg": peak,
        "t_peak": t_peak,
        "residual": residual,
        "final_log_neg": log_negativity(final),
        "converged": trajectory.converged,
    }


def sweep(
    config: RunConfig,
    axes: list[SweepAxis],
    out_dir: Path,
    *,
    max_workers: int = 1,
) -> list[dict[str, Any]]:
    if len(axes) > MAX_AXES:
        raise ConfigError(f"at most {MAX_AXES} sweep axes are supported, got {len(axes)}", field="axis")
    names = [axis.name for axis in axes]
    if len(set(names)) != len(names) or len({key for axis in axes for key in axis.keys}) != sum(
        len(axis.keys) for axis in axes
    ):
        raise ConfigError("a config field appears on more than one axis", field="axis")

    base = dict(config.payload)
    base.pop("series", None)
    points = list(itertools.product(*(axis.values for axis in axes)))
    point_configs = [
        RunConfig.from_payload(
            apply_overrides(base, _point_overrides(tuple(axes), point)),
            default_cutoff=config.cutoff.n_max,
        )
        for point in points
    ]
    logger.info("sweeping %d points over %s", len(points), ", ".join(names) or "no axes")
    summaries = gather([Worker(sweep_point, point_config) for point_config in point_configs], max_workers)

    rows = []
    for point, summary in zip(points, summaries):
        row = dict(zip(names, point))
        row.update(summary)
        rows.append(row)
        logger.info("sweep point %s: peak E_N %.6g", dict(zip(names, point)), summary["peak_log_neg"])

    store = RunOutputStore(out_dir)
    csv_path = store.save_sweep(names, rows)
    store.save_manifest(
        {
            "code_version": __version__,
            "config": config.resolved(),
            "axes": {axis.name: list(axis.values) for axis in axes},
            "sweep": csv_path.name,
            "converged": all(row["converged"] for row in rows),
        }
    )
    return rows
