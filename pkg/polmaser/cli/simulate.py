"""The ``simulate`` command: E_N(t) series, cutoff check, optional Monte Carlo oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from polmaser import __version__
from polmaser.models import RunConfig
from polmaser.physics.collision import ArrivalProcess, EnsembleStats, ensemble_average
from polmaser.physics.evolve import Trajectory, integrate
from polmaser.physics.master_eq import photon_gain
from polmaser.services.output_store import RunOutputStore, sha256_of
from polmaser.workers import Worker, gather

logger = logging.getLogger(__name__)

CUTOFF_STEP = 4
CUTOFF_TOLERANCE = 1e-4
MC_FLOOR = 1e-3


@dataclass(slots=True)
class SimulationReport:
    out_dir: Path
    manifest: dict[str, Any]

    @property
    def converged(self) -> bool:
        return bool(self.manifest["converged"])


def finite_or_none(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


def run_series(config: RunConfig) -> Trajectory:
    rho0 = config.initial.density(config.cutoff)
    return integrate(config.generator_spec(), rho0, config.grid, config.solver)


def first_leak(trajectory: Trajectory) -> float | None:
    """Time of the first sample whose edge population exceeds the leakage threshold."""
    for t, diag in zip(trajectory.times, trajectory.diagnostics):
        if diag.leaks:
            return float(t)
    return None


def cutoff_check(label: str, trajectory: Trajectory, refined: Trajectory, n_max: int) -> dict[str, Any]:
    peak, _ = trajectory.peak_log_neg()
    peak_refined, _ = refined.peak_log_neg()
    difference = abs(peak - peak_refined)
    ok = difference <= CUTOFF_TOLERANCE
    if not ok:
        logger.warning(
            "%s: peak E_N moves by %.3g between n_max=%d and n_max=%d",
            label,
            difference,
            n_max,
            n_max + CUTOFF_STEP,
        )
    return {
        "n_max": n_max,
        "n_max_check": n_max + CUTOFF_STEP,
        "peak_log_neg": peak,
        "peak_log_neg_check": peak_refined,
        "difference": difference,
        "ok": ok,
    }


def compare_ensemble(stats: EnsembleStats, trajectory: Trajectory) -> dict[str, Any]:
    """Largest deviation of the ensemble from the deterministic run, in units of its allowance."""
    report: dict[str, Any] = {"n_traj": stats.n_traj}
    ok = True
    for name in ("n1", "n2", "log_neg"):
        reference = trajectory.series(name)
        estimate = stats.averaged_series(name)
        if name == "log_neg":
            stderr = np.nan_to_num(stats.log_neg_stderr, nan=0.0)
        else:
            stderr = stats.stderr[name]
        allowance = np.maximum(3.0 * stderr, MC_FLOOR)
        deviation = np.abs(estimate - reference)
        worst = int(np.argmax(deviation / allowance))
        passed = bool(np.all(deviation <= allowance))
        ok = ok and passed
        report[name] = {
            "max_deviation": float(deviation.max()),
            "worst_ratio": float(deviation[worst] / allowance[worst]),
            "t_worst": float(stats.times[worst]),
            "ok": passed,
        }
    report["ok"] = ok
    return report


def simulate(
    config: RunConfig,
    out_dir: Path,
    *,
    max_workers: int = 1,
    chunk_size: int = 25,
    check_cutoff: bool = True,
) -> SimulationReport:
    runs = config.expand_series()
    logger.info("simulating %d series at n_max=%d (%s)", len(runs), config.cutoff.n_max, config.variant.value)

    tasks = [Worker(run_series, series_config) for _, series_config in runs]
    if check_cutoff:
        refined_configs = [
            series_config.with_overrides({"cutoff": series_config.cutoff.n_max + CUTOFF_STEP})
            for _, series_config in runs
        ]
        tasks.extend(Worker(run_series, refined) for refined in refined_configs)
    results = gather(tasks, max_workers)
    trajectories = results[: len(runs)]
    refined_runs = results[len(runs) :]

    store = RunOutputStore(out_dir)
    series: dict[str, Any] = {}
    convergence: dict[str, Any] = {}
    monte_carlo: dict[str, Any] | None = None
    converged = True

    for index, ((label, series_config), trajectory) in enumerate(zip(runs, trajectories)):
        csv_path = store.save_series(label, trajectory)
        states_path = store.save_states(label, trajectory)
        peak, t_peak = trajectory.peak_log_neg()
        summary = trajectory.diagnostics_summary()
        gain = photon_gain(series_config.generator_spec())
        t_leak = first_leak(trajectory)
        if max(gain) > 0:
            logger.warning("%s: photon gain %.3g > 0, the field has no steady state under the cutoff", label, max(gain))
        series[label] = {
            "csv": csv_path.name,
            "sha256": sha256_of(csv_path),
            "states": states_path.name if states_path else None,
            "solver": trajectory.stats.as_dict(),
            "diagnostics": {key: finite_or_none(value) for key, value in summary.items()},
            "peak_log_neg": peak,
            "t_peak": t_peak,
            "photon_gain": list(gain),
            "t_leak": t_leak,
            "converged": trajectory.converged,
        }
        converged = converged and trajectory.converged
        logger.info("%s: peak E_N %.6g at t=%.6g, converged=%s", label, peak, t_peak, trajectory.converged)

        if check_cutoff:
            check = cutoff_check(label, trajectory, refined_runs[index], series_config.cutoff.n_max)
            convergence[label] = check
            converged = converged and check["ok"]

        if series_config.monte_carlo is not None:
            monte_carlo = monte_carlo or {}
            spec = series_config.monte_carlo
            stats = ensemble_average(
                series_config.atom,
                series_config.initial.density(series_config.cutoff),
                series_config.params,
                ArrivalProcess(rate=series_config.params.r, horizon=series_config.grid.t_end, seed=spec.seed),
                series_config.grid,
                spec.n_traj,
                chunk_size=chunk_size,
                max_workers=max_workers,
                tolerances=series_config.solver.tolerances,
            )
            mc_path = store.save_records(f"{label}.mc", stats.averaged)
            comparison = compare_ensemble(stats, trajectory)
            comparison.update(seed=spec.seed, csv=mc_path.name, sha256=sha256_of(mc_path))
            monte_carlo[label] = comparison
            logger.info("%s: Monte Carlo agreement %s over %d trajectories", label, comparison["ok"], spec.n_traj)

    manifest = {
        "code_version": __version__,
        "config": config.resolved(),
        "seed": config.monte_carlo.seed if config.monte_carlo else None,
        "series": series,
        "cutoff_convergence": convergence if check_cutoff else None,
        "monte_carlo": monte_carlo,
        "converged": converged,
    }
    manifest["config"]["series"] = [
        {"label": item.label, "set": dict(item.overrides)} for item in config.series
    ]
    store.save_manifest(manifest)
    logger.info("run written to %s (converged=%s)", store.out_dir, converged)
    return SimulationReport(out_dir=store.out_dir, manifest=manifest)
