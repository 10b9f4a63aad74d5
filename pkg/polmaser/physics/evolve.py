"""Time integration of rho_dot = G(rho).

The stepper is the Dormand-Prince 5(4) pair with first-same-as-last reuse, run
directly on the density matrix. Steps are shortened to land on sample times, so
samples are never interpolated. After every accepted step the state is replaced by
its Hermitian part; positivity is only monitored.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from polmaser.errors import InvariantViolation, StateValidationError
from polmaser.physics.atom_field import AtomPreparation, InteractionParams, collision_map
from polmaser.physics.entanglement import ObservableRecord, observe
from polmaser.physics.hilbert import (
    DensityMatrix,
    FockCutoff,
    OperatorMatrix,
    StateDiagnostics,
    StateTolerances,
    leakage,
    validate_state,
)
from polmaser.physics.master_eq import GeneratorSpec, build_generator

logger = logging.getLogger(__name__)

Rhs = Callable[[OperatorMatrix], OperatorMatrix]

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# fifth-order minus embedded fourth-order weights, last entry multiplies f(y_new)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(slots=True, frozen=True)
class SolverConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float | None = None
    validation_cadence: int = 1
    retain_states: bool = False
    tolerances: StateTolerances = field(default_factory=StateTolerances)

    def __post_init__(self) -> None:
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InvariantViolation("solver tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise InvariantViolation("max_step must be positive")
        if self.validation_cadence < 1:
            raise InvariantViolation("validation_cadence must be >= 1")


@dataclass(slots=True, frozen=True)
class TimeGrid:
    t_end: float
    n_samples: int
    t_start: float = 0.0

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise InvariantViolation(f"t_end must exceed t_start, got [{self.t_start}, {self.t_end}]")
        if self.n_samples < 2:
            raise InvariantViolation("a time grid needs at least 2 samples")

    def times(self) -> npt.NDArray[np.float64]:
        return np.linspace(self.t_start, self.t_end, self.n_samples)


@dataclass(slots=True)
class SolverStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_evals: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"n_steps": self.n_steps, "n_rejected": self.n_rejected, "n_evals": self.n_evals}


@dataclass(slots=True)
class Trajectory:
    times: npt.NDArray[np.float64]
    observables: list[ObservableRecord]
    diagnostics: list[StateDiagnostics]
    final_state: OperatorMatrix
    converged: bool = True
    states: list[OperatorMatrix] | None = None
    stats: SolverStats = field(default_factory=SolverStats)

    def series(self, name: str) -> npt.NDArray[np.float64]:
        return np.array([getattr(record, name) for record in self.observables])

    def peak_log_neg(self) -> tuple[float, float]:
        values = self.series("log_neg")
        k = int(np.argmax(values))
        return float(values[k]), float(self.times[k])

    def diagnostics_summary(self) -> dict[str, float]:
        min_eigs = [d.min_eig for d in self.diagnostics if not math.isnan(d.min_eig)]
        return {
            "max_trace_err": max(d.trace_err for d in self.diagnostics),
            "max_herm_err": max(d.herm_err for d in self.diagnostics),
            "min_min_eig": min(min_eigs) if min_eigs else float("nan"),
            "max_leakage": max(d.leakage for d in self.diagnostics),
        }


def resolve_max_step(params: InteractionParams, cutoff: FockCutoff, config: SolverConfig) -> float:
    """min(0.1 / r, 0.1 / Omega_max) unless the config fixes it."""
    if config.max_step is not None:
        return config.max_step
    candidates = [math.inf]
    if params.r > 0:
        candidates.append(0.1 / params.r)
    rabi = params.max_rabi_frequency(cutoff)
    if rabi > 0:
        candidates.append(0.1 / rabi)
    return min(candidates)


def _hermitian_part(matrix: OperatorMatrix) -> OperatorMatrix:
    return 0.5 * (matrix + matrix.conj().T)


class DormandPrince:
    """Adaptive embedded 5(4) stepper for an autonomous matrix ODE."""

    def __init__(self, rhs: Rhs, *, rel_tol: float, abs_tol: float, max_step: float) -> None:
        self.rhs = rhs
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_step = max_step
        self.stats = SolverStats()
        self.h: float | None = None

    def evaluate(self, y: OperatorMatrix) -> OperatorMatrix:
        self.stats.n_evals += 1
        return self.rhs(y)

    def _error_norm(self, err: OperatorMatrix, y: OperatorMatrix, y_new: OperatorMatrix) -> float:
        scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))

    def _initial_step(self, y: OperatorMatrix, f: OperatorMatrix, span: float) -> float:
        scale = self.abs_tol + self.rel_tol * np.abs(y)
        d0 = float(np.sqrt(np.mean(np.abs(y / scale) ** 2)))
        d1 = float(np.sqrt(np.mean(np.abs(f / scale) ** 2)))
        h = span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        return min(h, span, self.max_step)

    def advance(
        self, y: OperatorMatrix, f: OperatorMatrix, t: float, t_target: float
    ) -> tuple[OperatorMatrix, OperatorMatrix]:
        """Step from t to exactly t_target; returns (y, rhs(y)) there."""
        if self.h is None:
            self.h = self._initial_step(y, f, t_target - t)
        while t < t_target:
            remaining = t_target - t
            landing = self.h >= remaining * (1.0 - 1e-12)
            h = remaining if landing else min(self.h, self.max_step)

            stages = [f]
            for i in range(1, 6):
                increment = sum((coef * k for coef, k in zip(_A[i], stages) if coef != 0.0), np.zeros_like(y))
                stages.append(self.evaluate(y + h * increment))
            y_new = y + h * sum((b * k for b, k in zip(_B, stages) if b != 0.0), np.zeros_like(y))
            f_new = self.evaluate(y_new)
            err = h * sum((e * k for e, k in zip(_E, [*stages, f_new]) if e != 0.0), np.zeros_like(y))
            err_norm = self._error_norm(err, y, y_new)

            if err_norm <= 1.0:
                factor = _MAX_FACTOR if err_norm == 0.0 else min(_MAX_FACTOR, _SAFETY * err_norm**-0.2)
                t = t_target if landing else t + h
                # G is linear and Hermiticity-preserving, so G(herm(y)) = herm(G(y))
                y = _hermitian_part(y_new)
                f = _hermitian_part(f_new)
                self.stats.n_steps += 1
                proposal = min(h * factor, self.max_step)
                # a shortened landing step must not shrink the running step size
                self.h = max(proposal, self.h) if landing else proposal
            else:
                self.stats.n_rejected += 1
                self.h = h * max(_MIN_FACTOR, _SAFETY * err_norm**-0.2)
                logger.debug("step rejected at t=%.6g (err=%.3g, h -> %.3g)", t, err_norm, self.h)
                if self.h < 1e-14 * max(1.0, abs(t)):
                    raise InvariantViolation(f"step size underflow at t={t:.6g}", code="solver")
        return y, f


def sample_state(
    t: float,
    rho: OperatorMatrix,
    cutoff: FockCutoff,
    tolerances: StateTolerances,
    *,
    full_check: bool = True,
    clipped: float = 0.0,
) -> tuple[ObservableRecord, StateDiagnostics]:
    """Observables and diagnostics at one sample; raises on a broken state invariant.

    ``clipped`` is the largest weight a collision has lost to the truncation so far.
    The reported leakage is the larger of it and the edge population.
    """
    if full_check:
        diagnostics = validate_state(rho, tolerances, cutoff=cutoff)
    else:
        diagnostics = StateDiagnostics(
            trace_err=float(abs(np.trace(rho) - 1.0)),
            herm_err=float(np.max(np.abs(rho - rho.conj().T))),
            min_eig=float("nan"),
            leakage=leakage(rho, cutoff),
            tolerances=tolerances,
        )
    if clipped > diagnostics.leakage:
        diagnostics = replace(diagnostics, leakage=float(clipped))
    violation = diagnostics.violation
    if violation is not None:
        raise StateValidationError(
            f"state invariant broken: trace_err={diagnostics.trace_err:.3g}, "
            f"herm_err={diagnostics.herm_err:.3g}, min_eig={diagnostics.min_eig:.3g}",
            time=t,
            invariant=violation,
        )
    return observe(t, rho, cutoff, diagnostics), diagnostics


def integrate_rhs(
    rhs: Rhs,
    rho0: DensityMatrix,
    grid: TimeGrid,
    config: SolverConfig,
    *,
    max_step: float,
) -> Trajectory:
    cutoff = rho0.cutoff
    times = grid.times()
    stepper = DormandPrince(rhs, rel_tol=config.rel_tol, abs_tol=config.abs_tol, max_step=max_step)

    y = rho0.copy_entries()
    f = stepper.evaluate(y)
    observables: list[ObservableRecord] = []
    diagnostics: list[StateDiagnostics] = []
    states: list[OperatorMatrix] | None = [] if config.retain_states else None
    converged = True

    for k, t in enumerate(times):
        if k > 0:
            y, f = stepper.advance(y, f, float(times[k - 1]), float(t))
        record, diag = sample_state(
            float(t),
            y,
            cutoff,
            config.tolerances,
            full_check=k % config.validation_cadence == 0 or k == len(times) - 1,
        )
        observables.append(record)
        diagnostics.append(diag)
        if states is not None:
            states.append(y.copy())
        if diag.leaks and converged:
            converged = False
            logger.warning(
                "truncation leakage %.3g above %.1g at t=%.6g (n_max=%d)",
                diag.leakage,
                config.tolerances.leakage,
                t,
                cutoff.n_max,
            )

    logger.debug("integration done: %s", stepper.stats.as_dict())
    return Trajectory(
        times=times,
        observables=observables,
        diagnostics=diagnostics,
        final_state=y,
        converged=converged,
        states=states,
        stats=stepper.stats,
    )


def integrate(spec: GeneratorSpec, rho0: DensityMatrix, grid: TimeGrid, config: SolverConfig) -> Trajectory:
    if rho0.cutoff != spec.cutoff:
        raise InvariantViolation(f"initial state cutoff {rho0.cutoff.n_max} != generator cutoff {spec.cutoff.n_max}")
    return integrate_rhs(
        build_generator(spec),
        rho0,
        grid,
        config,
        max_step=resolve_max_step(spec.params, spec.cutoff, config),
    )


def discrete_update(
    atom: AtomPreparation, rho: DensityMatrix, params: InteractionParams, dt: float
) -> DensityMatrix:
    """One coarse-grained tick: an atom arrives with probability r dt."""
    probability = params.r * dt
    if dt < 0 or probability > 1.0:
        raise InvariantViolation(f"r*dt must lie in [0, 1], got {probability!r}", code="probability")
    if probability == 0.0:
        return rho
    mapped = collision_map(atom, params, rho.cutoff).apply(rho.entries)
    return DensityMatrix(cutoff=rho.cutoff, entries=probability * mapped + (1.0 - probability) * rho.entries)


def run_discrete(
    atom: AtomPreparation,
    rho0: DensityMatrix,
    params: InteractionParams,
    grid: TimeGrid,
    steps_per_sample: int,
    *,
    tolerances: StateTolerances | None = None,
) -> Trajectory:
    """``discrete_update`` ticks between samples; leakage includes the clipped collision weight."""
    if steps_per_sample < 1:
        raise InvariantViolation(f"steps_per_sample must be >= 1, got {steps_per_sample}")
    tolerances = tolerances or StateTolerances()
    cutoff = rho0.cutoff
    mapping = collision_map(atom, params, cutoff)
    times = grid.times()
    observables: list[ObservableRecord] = []
    diagnostics: list[StateDiagnostics] = []
    stats = SolverStats()
    clipped = 0.0
    rho = rho0
    for k, t in enumerate(times):
        if k > 0:
            dt = float(t - times[k - 1]) / steps_per_sample
            for _ in range(steps_per_sample):
                clipped = max(clipped, mapping.clipped_weight(rho))
                rho = discrete_update(atom, rho, params, dt)
            stats.n_steps += steps_per_sample
        record, diag = sample_state(float(t), rho.entries, cutoff, tolerances, clipped=clipped)
        observables.append(record)
        diagnostics.append(diag)
    converged = not any(diag.leaks for diag in diagnostics)
    if not converged:
        worst = max(diag.leakage for diag in diagnostics)
        logger.warning("discrete run leaks %.3g above %.1g (n_max=%d)", worst, tolerances.leakage, cutoff.n_max)
    return Trajectory(
        times=times,
        observables=observables,
        diagnostics=diagnostics,
        final_state=rho.copy_entries(),
        converged=converged,
        stats=stats,
    )


def steady_state_probe(
    spec: GeneratorSpec, rho0: DensityMatrix, horizon: float, config: SolverConfig
) -> tuple[DensityMatrix, float]:
    """Final state at ``horizon`` and the residual ||G(rho)||; the caller judges stationarity."""
    trajectory = integrate(spec, rho0, TimeGrid(t_end=horizon, n_samples=2), config)
    final = DensityMatrix(cutoff=spec.cutoff, entries=trajectory.final_state)
    residual = float(np.linalg.norm(build_generator(spec)(final.entries)))
    return final, residual
