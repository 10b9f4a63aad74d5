"""Stochastic repeated interactions.

Atoms arrive as a Poisson process. At each arrival the field goes through M(tau)
at once; between arrivals it decays under the cavity losses alone (applied as the
exact damping channel). The ensemble mean of such trajectories is the solution of
rho_dot = r[M(tau) - 1] rho + losses, which makes this module an independent check
of the deterministic solver.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from polmaser.errors import ConfigError, InvariantViolation
from polmaser.physics.atom_field import AtomPreparation, InteractionParams, collision_map
from polmaser.physics.entanglement import ObservableRecord, log_negativity, mode_observables
from polmaser.physics.evolve import SolverStats, TimeGrid, Trajectory, sample_state
from polmaser.physics.hilbert import (
    DensityMatrix,
    FockCutoff,
    OperatorMatrix,
    StateDiagnostics,
    StateTolerances,
)
from polmaser.physics.master_eq import loss_channel
from polmaser.workers import Worker, gather

logger = logging.getLogger(__name__)

_U64 = 2**64
SCALARS: tuple[str, ...] = ("n1", "n2", "purity", "cross_re", "cross_im")


@dataclass(slots=True, frozen=True)
class ArrivalProcess:
    rate: float
    horizon: float
    seed: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.rate) or self.rate < 0:
            raise InvariantViolation(f"arrival rate must be nonnegative, got {self.rate!r}")
        if not self.horizon > 0:
            raise InvariantViolation(f"horizon must be positive, got {self.horizon!r}")
        if not (0 <= int(self.seed) < _U64):
            raise InvariantViolation(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(slots=True)
class EnsembleStats:
    n_traj: int
    times: npt.NDArray[np.float64]
    mean: dict[str, npt.NDArray[np.float64]]
    stderr: dict[str, npt.NDArray[np.float64]]
    averaged: list[ObservableRecord]
    log_neg_stderr: npt.NDArray[np.float64]
    final_state: OperatorMatrix
    tolerances: StateTolerances = field(default_factory=StateTolerances)

    def averaged_series(self, name: str) -> npt.NDArray[np.float64]:
        return np.array([getattr(record, name) for record in self.averaged])

    @property
    def converged(self) -> bool:
        return all(record.leakage <= self.tolerances.leakage for record in self.averaged)


def trajectory_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for trajectory ``index`` of a run."""
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def sample_arrivals(proc: ArrivalProcess) -> list[float]:
    if proc.rate == 0:
        return []
    rng = np.random.Generator(np.random.Philox(int(proc.seed)))
    mean_gap = 1.0 / proc.rate
    expected = proc.rate * proc.horizon
    batch = max(16, int(expected + 5.0 * math.sqrt(expected) + 1))
    arrivals: list[float] = []
    t = 0.0
    while True:
        for gap in rng.exponential(mean_gap, size=batch):
            t += float(gap)
            if t > proc.horizon:
                return arrivals
            arrivals.append(t)


def _walk(
    atom: AtomPreparation,
    rho0: OperatorMatrix,
    params: InteractionParams,
    cutoff: FockCutoff,
    arrivals: Sequence[float],
    times: npt.NDArray[np.float64],
) -> Iterator[tuple[float, OperatorMatrix, float]]:
    """Yields the state at every sample time and the largest clipped weight so far."""
    mapping = collision_map(atom, params, cutoff) if arrivals else None
    rho = np.array(rho0, dtype=np.complex128, copy=True)
    clipped = 0.0
    now = float(times[0])
    pending = iter(sorted(t for t in arrivals if t > now))
    upcoming = next(pending, None)
    for t_sample in times:
        t_sample = float(t_sample)
        while upcoming is not None and upcoming <= t_sample:
            rho = loss_channel(rho, params.kappa1, params.kappa2, upcoming - now, cutoff)
            clipped = max(clipped, mapping.clipped_weight(rho))
            rho = mapping.apply(rho)
            now = upcoming
            upcoming = next(pending, None)
        rho = loss_channel(rho, params.kappa1, params.kappa2, t_sample - now, cutoff)
        now = t_sample
        yield t_sample, rho, clipped


def run_trajectory(
    atom: AtomPreparation,
    rho0: DensityMatrix,
    params: InteractionParams,
    arrivals: Sequence[float],
    grid: TimeGrid,
    *,
    tolerances: StateTolerances | None = None,
    retain_states: bool = False,
) -> Trajectory:
    tolerances = tolerances or StateTolerances()
    cutoff = rho0.cutoff
    times = grid.times()
    observables: list[ObservableRecord] = []
    diagnostics: list[StateDiagnostics] = []
    states: list[OperatorMatrix] | None = [] if retain_states else None
    converged = True
    for t, rho, clipped in _walk(atom, rho0.entries, params, cutoff, arrivals, times):
        record, diag = sample_state(t, rho, cutoff, tolerances, clipped=clipped)
        observables.append(record)
        diagnostics.append(diag)
        if states is not None:
            states.append(rho.copy())
        converged = converged and not diag.leaks
    return Trajectory(
        times=times,
        observables=observables,
        diagnostics=diagnostics,
        final_state=rho,
        converged=converged,
        states=states,
        stats=SolverStats(n_steps=sum(1 for t in arrivals if times[0] < t <= times[-1])),
    )


def _run_chunk(
    atom: AtomPreparation,
    rho0: OperatorMatrix,
    params: InteractionParams,
    cutoff: FockCutoff,
    horizon: float,
    seeds: Sequence[int],
    times: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.complex128], npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Summed states, per-trajectory scalar observables and the worst clipped weight per sample."""
    state_sum = np.zeros((len(times), cutoff.dim, cutoff.dim), dtype=np.complex128)
    scalars = np.zeros((len(seeds), len(times), len(SCALARS)))
    clipped = np.zeros(len(times))
    for j, seed in enumerate(seeds):
        arrivals = sample_arrivals(ArrivalProcess(rate=params.r, horizon=horizon, seed=seed))
        for k, (_, rho, lost) in enumerate(_walk(atom, rho0, params, cutoff, arrivals, times)):
            state_sum[k] += rho
            n1, n2, purity, cross = mode_observables(rho, cutoff)
            scalars[j, k] = (n1, n2, purity, cross.real, cross.imag)
            clipped[k] = max(clipped[k], lost)
    return state_sum, scalars, clipped


def _chunk_log_neg(state_sum: npt.NDArray[np.complex128], count: int) -> npt.NDArray[np.float64]:
    out = np.empty(state_sum.shape[0])
    for k, total in enumerate(state_sum):
        mean_state = total / count
        out[k] = log_negativity(0.5 * (mean_state + mean_state.conj().T))
    return out


def ensemble_average(
    atom: AtomPreparation,
    rho0: DensityMatrix,
    params: InteractionParams,
    proc: ArrivalProcess,
    grid: TimeGrid,
    n_traj: int,
    *,
    seeds: Sequence[int] | None = None,
    chunk_size: int = 25,
    max_workers: int = 1,
    tolerances: StateTolerances | None = None,
) -> EnsembleStats:
    """Mean and standard error over ``n_traj`` independent arrival histories.

    Seeds default to ``trajectory_seed(proc.seed, i)``. The entanglement of the
    ensemble is taken on the averaged state; its standard error comes from the spread
    of chunk-averaged states (batch means). Chunks have a fixed size and are reduced
    in index order, so the result does not depend on ``max_workers``.
    """
    if n_traj < 2:
        raise InvariantViolation(f"an ensemble needs at least 2 trajectories, got {n_traj}")
    if seeds is None:
        seeds = [trajectory_seed(proc.seed, i) for i in range(n_traj)]
    seeds = [int(seed) for seed in seeds]
    if len(seeds) != n_traj:
        raise InvariantViolation(f"{len(seeds)} seeds given for {n_traj} trajectories")
    if len(set(seeds)) != len(seeds):
        raise InvariantViolation("trajectory seeds must be distinct", code="seeds")
    if proc.rate != params.r:
        raise InvariantViolation(f"arrival rate {proc.rate} differs from r = {params.r}")
    if chunk_size < 1:
        raise InvariantViolation("chunk_size must be >= 1")
    if proc.horizon < grid.t_end:
        raise ConfigError(
            f"arrival horizon {proc.horizon} ends before the last sample at t={grid.t_end}",
            field="horizon",
        )

    tolerances = tolerances or StateTolerances()
    cutoff = rho0.cutoff
    times = grid.times()
    chunks = [seeds[i : i + chunk_size] for i in range(0, n_traj, chunk_size)]
    logger.info("ensemble: %d trajectories in %d chunks (workers=%d)", n_traj, len(chunks), max_workers)
    results = gather(
        [
            Worker(_run_chunk, atom, rho0.entries, params, cutoff, proc.horizon, chunk, times)
            for chunk in chunks
        ],
        max_workers,
    )

    state_total = np.zeros((len(times), cutoff.dim, cutoff.dim), dtype=np.complex128)
    clipped = np.zeros(len(times))
    chunk_log_negs = []
    for chunk, (state_sum, _, chunk_clipped) in zip(chunks, results):
        state_total += state_sum
        clipped = np.maximum(clipped, chunk_clipped)
        chunk_log_negs.append(_chunk_log_neg(state_sum, len(chunk)))
    scalars = np.concatenate([scalars for _, scalars, _ in results], axis=0)

    mean = {name: scalars[:, :, i].mean(axis=0) for i, name in enumerate(SCALARS)}
    stderr = {name: scalars[:, :, i].std(axis=0, ddof=1) / math.sqrt(n_traj) for i, name in enumerate(SCALARS)}
    if len(chunk_log_negs) >= 2:
        log_neg_stderr = np.std(np.array(chunk_log_negs), axis=0, ddof=1) / math.sqrt(len(chunk_log_negs))
    else:
        log_neg_stderr = np.full(len(times), np.nan)

    averaged: list[ObservableRecord] = []
    final_state = state_total[-1] / n_traj
    for t, total, lost in zip(times, state_total, clipped):
        mean_state = total / n_traj
        mean_state = 0.5 * (mean_state + mean_state.conj().T)
        record, _ = sample_state(float(t), mean_state, cutoff, tolerances, clipped=float(lost))
        averaged.append(record)
        final_state = mean_state

    return EnsembleStats(
        n_traj=n_traj,
        times=times,
        mean=mean,
        stderr=stderr,
        averaged=averaged,
        log_neg_stderr=log_neg_stderr,
        final_state=final_state,
        tolerances=tolerances,
    )
