"""The ``validate`` command: invariant checks over all physics modules."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache

import numpy as np

from polmaser.cli.presets import preset_payload
from polmaser.cli.simulate import CUTOFF_STEP, CUTOFF_TOLERANCE
from polmaser.errors import SimulationError
from polmaser.physics.atom_field import (
    AtomPreparation,
    InteractionParams,
    choi_matrix,
    collision_map,
    excitation_number,
    propagator_block,
    propagator_numeric,
    random_atom,
)
from polmaser.physics.collision import ArrivalProcess, ensemble_average
from polmaser.physics.evolve import SolverConfig, TimeGrid, integrate
from polmaser.physics.hilbert import FockCutoff, fock_state, random_state, swap_modes
from polmaser.physics.master_eq import (
    Generator,
    GeneratorSpec,
    GeneratorVariant,
    build_generator,
    loss_channel,
    photon_gain,
)

logger = logging.getLogger(__name__)

GeneratorFactory = Callable[[GeneratorSpec], Generator]

# weak-coupling reference set, units of omega0
WEAK = InteractionParams(g1=0.09, g2=0.05, r=0.1, tau=1.0, kappa1=1e-6, kappa2=2e-6)
WEAK_ATOM = AtomPreparation.with_max_coherence(5 / 8, 5 / 16, 1 / 16, xi=0.7)
STRONG = InteractionParams(g1=0.9, g2=0.5, r=1.0, tau=1.0)

# smallest transient maximum of E_N accepted at the published parameters
TRANSIENT_FLOOR = 1e-2


class Level(StrEnum):
    FAST = "fast"
    FULL = "full"


@dataclass(slots=True, frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_propagator_blocks(max_excitations: int = 12) -> CheckResult:
    cutoff = FockCutoff(max_excitations)
    d = cutoff.local_dim
    worst = 0.0
    for tau in (0.1, 1.0, 5.0):
        numeric = propagator_numeric(STRONG, cutoff, tau)
        for m in range(max_excitations + 1):
            for n in range(max_excitations + 1 - m):
                block = propagator_block(m, n, STRONG, tau)
                index = [a * d * d + cutoff.index(p, q) for a, p, q in block.basis]
                worst = max(worst, float(np.max(np.abs(numeric[np.ix_(index, index)] - block.u))))
    return CheckResult("propagator-blocks", worst <= 1e-10, f"max |U_block - U_numeric| = {worst:.3g}")


def check_excitation_conservation(n_max: int = 6) -> CheckResult:
    cutoff = FockCutoff(n_max)
    number = excitation_number(cutoff)
    u = propagator_numeric(STRONG, cutoff)
    worst = float(np.max(np.abs(u @ number - number @ u)))
    return CheckResult("excitation-number", worst <= 1e-10, f"max |[U, N_exc]| = {worst:.3g}")


def check_cptp(n_atoms: int, *, seed: int = 7, n_max: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    cutoff = FockCutoff(n_max)
    dim = cutoff.dim
    min_eig = math.inf
    tp_err = 0.0
    for _ in range(n_atoms):
        mapping = collision_map(random_atom(rng), STRONG, cutoff)
        choi = choi_matrix(mapping.apply, cutoff)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min()))
        partial = np.einsum("ikjk->ij", choi.reshape(dim, dim, dim, dim))
        tp_err = max(tp_err, float(np.max(np.abs(partial - np.eye(dim)))))
    passed = min_eig >= -1e-10 and tp_err <= 1e-10
    return CheckResult("cptp", passed, f"{n_atoms} atoms: min eig {min_eig:.3g}, trace err {tp_err:.3g}")


def generator_gap(
    atom: AtomPreparation,
    params: InteractionParams,
    cutoff: FockCutoff,
    states: list[np.ndarray],
    second_order: GeneratorFactory = build_generator,
) -> float:
    exact = build_generator(GeneratorSpec(GeneratorVariant.EXACT, params, atom, cutoff))
    approx = second_order(GeneratorSpec(GeneratorVariant.SECOND_ORDER, params, atom, cutoff))
    return max(float(np.linalg.norm(exact(rho) - approx(rho))) for rho in states)


def observed_orders(gaps: list[float]) -> list[float]:
    return [math.log2(coarse / fine) for coarse, fine in zip(gaps, gaps[1:])]


def check_generator_order(
    n_states: int,
    *,
    seed: int = 11,
    n_max: int = 3,
    second_order: GeneratorFactory = build_generator,
) -> CheckResult:
    """Gap between the exact and second-order generators as tau halves at fixed r."""
    rng = np.random.default_rng(seed)
    cutoff = FockCutoff(n_max)
    states = [random_state(cutoff, rng) for _ in range(n_states)]
    atom = AtomPreparation.with_max_coherence(5 / 8, 5 / 16, 1 / 16, xi=0.8)
    gaps = [
        generator_gap(atom, InteractionParams(g1=0.9, g2=0.5, r=1.0, tau=tau), cutoff, states, second_order)
        for tau in (0.2, 0.1, 0.05)
    ]
    orders = observed_orders(gaps)
    return CheckResult(
        "generator-order",
        min(orders) >= 2.7,
        "orders " + ", ".join(f"{order:.2f}" for order in orders) + " over tau 0.2, 0.1, 0.05",
    )


def check_loss_decay(kappa: float = 0.01) -> CheckResult:
    cutoff = FockCutoff(2)
    params = InteractionParams(g1=0.0, g2=0.0, r=0.0, tau=1.0, kappa1=kappa)
    spec = GeneratorSpec(GeneratorVariant.EXACT, params, AtomPreparation.ground(), cutoff)
    grid = TimeGrid(t_end=3.0 / kappa, n_samples=301)
    trajectory = integrate(spec, fock_state(1, 0, cutoff), grid, SolverConfig())
    expected = np.exp(-kappa * trajectory.times)
    rel_err = float(np.max(np.abs(trajectory.series("n1") - expected) / expected))
    channel = loss_channel(fock_state(1, 0, cutoff).entries, kappa, 0.0, grid.t_end, cutoff)
    channel_err = float(np.max(np.abs(channel - trajectory.final_state)))
    passed = rel_err <= 1e-6 and channel_err <= 1e-7
    return CheckResult("loss-decay", passed, f"rel err {rel_err:.3g}, channel gap {channel_err:.3g}")


def check_coherence_gate(
    n_max: int,
    t_end: float,
    n_samples: int,
    variants: tuple[GeneratorVariant, ...] = tuple(GeneratorVariant),
) -> CheckResult:
    cutoff = FockCutoff(n_max)
    atom = AtomPreparation(5 / 8, 5 / 16, 1 / 16, chi=0.0, xi=0.7)
    grid = TimeGrid(t_end=t_end, n_samples=n_samples)
    peaks = {}
    for variant in variants:
        spec = GeneratorSpec(variant, WEAK, atom, cutoff)
        trajectory = integrate(spec, fock_state(1, 0, cutoff), grid, SolverConfig())
        peaks[variant] = float(trajectory.series("log_neg").max())
    detail = ", ".join(f"{variant.value} {peak:.3g}" for variant, peak in peaks.items())
    return CheckResult("coherence-gate", max(peaks.values()) <= 1e-10, f"max E_N with chi*xi = 0: {detail}")


def check_mode_swap(n_max: int, t_end: float, n_samples: int) -> CheckResult:
    cutoff = FockCutoff(n_max)
    grid = TimeGrid(t_end=t_end, n_samples=n_samples)
    forward = integrate(
        GeneratorSpec(GeneratorVariant.EXACT, WEAK, WEAK_ATOM, cutoff),
        fock_state(1, 0, cutoff),
        grid,
        SolverConfig(),
    )
    mirrored = integrate(
        GeneratorSpec(GeneratorVariant.EXACT, WEAK.swapped(), WEAK_ATOM.swapped(), cutoff),
        fock_state(0, 1, cutoff),
        grid,
        SolverConfig(),
    )
    gap = float(np.max(np.abs(forward.series("log_neg") - mirrored.series("log_neg"))))
    state_gap = float(np.max(np.abs(swap_modes(forward.final_state, cutoff) - mirrored.final_state)))
    return CheckResult("mode-swap", gap <= 1e-9, f"max E_N gap {gap:.3g}, final state gap {state_gap:.3g}")


def check_monte_carlo(
    atom: AtomPreparation,
    params: InteractionParams,
    n_max: int,
    grid: TimeGrid,
    n_traj: int,
    *,
    seed: int = 20240601,
    max_workers: int = 1,
    chunk_size: int = 25,
) -> CheckResult:
    cutoff = FockCutoff(n_max)
    rho0 = fock_state(1, 0, cutoff)
    reference = integrate(GeneratorSpec(GeneratorVariant.EXACT, params, atom, cutoff), rho0, grid, SolverConfig())
    stats = ensemble_average(
        atom,
        rho0,
        params,
        ArrivalProcess(rate=params.r, horizon=grid.t_end, seed=seed),
        grid,
        n_traj,
        chunk_size=chunk_size,
        max_workers=max_workers,
    )
    worst = 0.0
    for name in ("n1", "n2"):
        allowance = np.maximum(3.0 * stats.stderr[name], 1e-3)
        worst = max(worst, float(np.max(np.abs(stats.averaged_series(name) - reference.series(name)) / allowance)))
    allowance = np.maximum(3.0 * np.nan_to_num(stats.log_neg_stderr, nan=0.0), 1e-3)
    log_neg_gap = np.abs(stats.averaged_series("log_neg") - reference.series("log_neg"))
    worst = max(worst, float(np.max(log_neg_gap / allowance)))
    return CheckResult(
        "monte-carlo",
        worst <= 1.0,
        f"{n_traj} trajectories: worst deviation {worst:.2f} of max(3 SE, 1e-3)",
    )


@dataclass(slots=True, frozen=True)
class FigureWindow:
    """Cutoff and time grid for runs at the published parameter set."""

    n_max: int
    t_end: float
    n_samples: int

    def refined(self) -> "FigureWindow":
        return FigureWindow(self.n_max + CUTOFF_STEP, self.t_end, self.n_samples)


def preset_window(name: str) -> FigureWindow:
    payload = preset_payload(name)
    grid = payload["grid"]
    return FigureWindow(int(payload["cutoff"]), float(grid["t_end"]), int(grid["n_samples"]))


@dataclass(slots=True, frozen=True)
class PeakReport:
    peak: float
    t_peak: float
    t_end: float
    leakage: float
    converged: bool
    gain: tuple[float, float]

    @property
    def interior(self) -> bool:
        return self.t_peak < self.t_end

    def describe(self) -> str:
        return f"{self.peak:.4g} at t={self.t_peak:.4g} (leakage {self.leakage:.2g})"


@lru_cache(maxsize=64)
def figure_peak(g1: float, g2: float, r: float, xi: float, window: FigureWindow) -> PeakReport:
    """Peak E_N from |1, 0> with the published losses and populations."""
    params = InteractionParams(g1=g1, g2=g2, r=r, tau=1.0, kappa1=1e-6, kappa2=2e-6)
    atom = AtomPreparation.with_max_coherence(5 / 8, 5 / 16, 1 / 16, xi=xi)
    cutoff = FockCutoff(window.n_max)
    spec = GeneratorSpec(GeneratorVariant.EXACT, params, atom, cutoff)
    grid = TimeGrid(t_end=window.t_end, n_samples=window.n_samples)
    trajectory = integrate(spec, fock_state(1, 0, cutoff), grid, SolverConfig())
    peak, t_peak = trajectory.peak_log_neg()
    logger.debug("peak E_N %.6g at t=%.6g for g=(%g, %g) r=%g xi=%g", peak, t_peak, g1, g2, r, xi)
    return PeakReport(
        peak=peak,
        t_peak=t_peak,
        t_end=window.t_end,
        leakage=trajectory.diagnostics_summary()["max_leakage"],
        converged=trajectory.converged,
        gain=photon_gain(spec),
    )


def _ordering(name: str, reports: dict[str, PeakReport], ordered: bool) -> CheckResult:
    """``ordered`` counts only when every run stayed inside the cutoff."""
    detail = "; ".join(f"{label}: {report.describe()}" for label, report in reports.items())
    leaking = [label for label, report in reports.items() if not report.converged]
    if leaking:
        detail += f"; leaking: {', '.join(leaking)}"
    return CheckResult(name, ordered and not leaking, detail)


def check_transient_peak(window: FigureWindow, *, floor: float = TRANSIENT_FLOOR) -> CheckResult:
    """Both coherence values peak above ``floor`` inside the window and agree at n_max + 4."""
    passed = True
    parts = []
    for xi in (0.7, 0.8):
        coarse = figure_peak(0.09, 0.05, 0.1, xi, window)
        fine = figure_peak(0.09, 0.05, 0.1, xi, window.refined())
        shift = abs(coarse.peak - fine.peak)
        passed = passed and coarse.peak > floor and coarse.interior and shift <= CUTOFF_TOLERANCE
        passed = passed and coarse.converged and fine.converged
        parts.append(f"xi={xi}: {coarse.describe()}, shift at n_max={window.n_max + CUTOFF_STEP} {shift:.2g}")
    gain = max(figure_peak(0.09, 0.05, 0.1, 0.7, window).gain)
    if gain > 0:
        parts.append(f"photon gain {gain:.3g} > 0, no steady state below any cutoff")
    return CheckResult("transient-peak", passed, "; ".join(parts))


def check_coherence_ordering(window: FigureWindow) -> CheckResult:
    reports = {f"xi={xi}": figure_peak(0.09, 0.05, 0.1, xi, window) for xi in (0.7, 0.8)}
    return _ordering("coherence-ordering", reports, reports["xi=0.8"].peak > reports["xi=0.7"].peak)


def check_rate_ordering(window: FigureWindow) -> CheckResult:
    reports = {f"r={r}": figure_peak(0.09, 0.09, r, 0.7, window) for r in (0.1, 0.5)}
    return _ordering("rate-ordering", reports, reports["r=0.5"].peak > reports["r=0.1"].peak)


def check_coupling_ordering(window: FigureWindow) -> CheckResult:
    reports = {f"g={g}": figure_peak(g, g, 0.1, 0.7, window) for g in (0.05, 0.09)}
    return _ordering("coupling-ordering", reports, reports["g=0.09"].peak > reports["g=0.05"].peak)


def check_interleaving(window: FigureWindow) -> CheckResult:
    """Unequal couplings (0.09, 0.05) land strictly between the equal-coupling curves."""
    reports = {
        "g=(0.05, 0.05)": figure_peak(0.05, 0.05, 0.1, 0.7, window),
        "g=(0.09, 0.05)": figure_peak(0.09, 0.05, 0.1, 0.7, window),
        "g=(0.09, 0.09)": figure_peak(0.09, 0.09, 0.1, 0.7, window),
    }
    low, mid, high = (report.peak for report in reports.values())
    return _ordering("interleaving", reports, low < mid < high)


def checks_for(
    level: Level, *, max_workers: int = 1, chunk_size: int = 25
) -> list[tuple[str, Callable[[], CheckResult]]]:
    if level is Level.FAST:
        mc_params = InteractionParams(g1=0.9, g2=0.5, r=0.5, tau=1.0, kappa1=0.01, kappa2=0.02)
        return [
            ("propagator-blocks", check_propagator_blocks),
            ("excitation-number", check_excitation_conservation),
            ("cptp", lambda: check_cptp(5)),
            ("generator-order", lambda: check_generator_order(3)),
            ("loss-decay", check_loss_decay),
            ("coherence-gate", lambda: check_coherence_gate(4, 2000.0, 21)),
            ("mode-swap", lambda: check_mode_swap(4, 2000.0, 21)),
            (
                "monte-carlo",
                lambda: check_monte_carlo(
                    WEAK_ATOM,
                    mc_params,
                    4,
                    TimeGrid(t_end=20.0, n_samples=6),
                    100,
                    max_workers=max_workers,
                    chunk_size=chunk_size,
                ),
            ),
        ]
    return [
        ("propagator-blocks", check_propagator_blocks),
        ("excitation-number", lambda: check_excitation_conservation(10)),
        ("cptp", lambda: check_cptp(20)),
        ("generator-order", lambda: check_generator_order(10)),
        ("loss-decay", check_loss_decay),
        ("coherence-gate", lambda: check_coherence_gate(10, 20000.0, 201)),
        ("mode-swap", lambda: check_mode_swap(10, 20000.0, 201)),
        (
            "monte-carlo",
            lambda: check_monte_carlo(
                WEAK_ATOM,
                WEAK,
                10,
                TimeGrid(t_end=4000.0, n_samples=21),
                500,
                max_workers=max_workers,
                chunk_size=chunk_size,
            ),
        ),
        ("transient-peak", lambda: check_transient_peak(preset_window("fig2a"))),
        ("coherence-ordering", lambda: check_coherence_ordering(preset_window("fig2a"))),
        ("rate-ordering", lambda: check_rate_ordering(preset_window("fig3b"))),
        ("coupling-ordering", lambda: check_coupling_ordering(preset_window("fig2a"))),
        ("interleaving", lambda: check_interleaving(preset_window("fig2a"))),
    ]


def run_checks(level: Level, *, max_workers: int = 1, chunk_size: int = 25) -> list[CheckResult]:
    results = []
    for name, check in checks_for(level, max_workers=max_workers, chunk_size=chunk_size):
        started = time.perf_counter()
        try:
            result = check()
        except SimulationError as exc:
            result = CheckResult(name, False, f"raised {exc}")
        result = CheckResult(result.name, result.passed, result.detail, time.perf_counter() - started)
        log = logger.info if result.passed else logger.error
        log("%-18s %s  %s (%.1fs)", result.name, "ok" if result.passed else "FAILED", result.detail, result.seconds)
        results.append(result)
    return results
