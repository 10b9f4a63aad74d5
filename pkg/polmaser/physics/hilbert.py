"""Truncated two-mode Fock space.

Basis ordering is mode-1-major: |m, n> sits at index ``m * d + n`` with
``d = n_max + 1``. Every module, and the on-disk state files, rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from polmaser.errors import InvariantViolation

OperatorMatrix: TypeAlias = npt.NDArray[np.complex128]

TOL_TRACE = 1e-9
TOL_HERMITIAN = 1e-9
TOL_PSD = 1e-8
LEAKAGE_THRESHOLD = 1e-6


@dataclass(slots=True, frozen=True)
class FockCutoff:
    n_max: int

    def __post_init__(self) -> None:
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvariantViolation(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def local_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.local_dim**2

    def index(self, m: int, n: int) -> int:
        if not (0 <= m <= self.n_max and 0 <= n <= self.n_max):
            raise InvariantViolation(f"occupation ({m}, {n}) outside 0..{self.n_max}")
        return m * self.local_dim + n

    def occupations(self) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
        """Photon numbers (m, n) of every basis index."""
        return _occupations(self.n_max)


@lru_cache(maxsize=32)
def _occupations(n_max: int) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
    d = n_max + 1
    m, n = np.divmod(np.arange(d * d), d)
    m.setflags(write=False)
    n.setflags(write=False)
    return m, n


@dataclass(slots=True, frozen=True)
class Bipartition:
    mode_a_dim: int
    mode_b_dim: int

    def __post_init__(self) -> None:
        if self.mode_a_dim < 1 or self.mode_b_dim < 1:
            raise InvariantViolation("bipartition dimensions must be positive")

    @property
    def dim(self) -> int:
        return self.mode_a_dim * self.mode_b_dim

    @classmethod
    def for_cutoff(cls, cutoff: FockCutoff) -> "Bipartition":
        return cls(mode_a_dim=cutoff.local_dim, mode_b_dim=cutoff.local_dim)

    def swapped(self) -> "Bipartition":
        return Bipartition(mode_a_dim=self.mode_b_dim, mode_b_dim=self.mode_a_dim)


@dataclass(slots=True, frozen=True)
class StateTolerances:
    tol_tr: float = TOL_TRACE
    tol_herm: float = TOL_HERMITIAN
    tol_psd: float = TOL_PSD
    leakage: float = LEAKAGE_THRESHOLD


@dataclass(slots=True, frozen=True)
class StateDiagnostics:
    trace_err: float
    herm_err: float
    min_eig: float
    leakage: float
    tolerances: StateTolerances = field(default_factory=StateTolerances, repr=False)

    @property
    def violation(self) -> str | None:
        """Name of the first broken state invariant, leakage excluded."""
        if self.trace_err > self.tolerances.tol_tr:
            return "trace"
        if self.herm_err > self.tolerances.tol_herm:
            return "hermiticity"
        if self.min_eig < -self.tolerances.tol_psd:
            return "positivity"
        return None

    @property
    def leaks(self) -> bool:
        return self.leakage > self.tolerances.leakage


@dataclass(slots=True, frozen=True, eq=False)
class DensityMatrix:
    cutoff: FockCutoff
    entries: OperatorMatrix = field(repr=False)

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.complex128, copy=True)
        expected = (self.cutoff.dim, self.cutoff.dim)
        if entries.shape != expected:
            raise InvariantViolation(f"density matrix shape {entries.shape} != {expected}")
        if not np.all(np.isfinite(entries)):
            raise InvariantViolation("density matrix has non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.cutoff.dim

    def copy_entries(self) -> OperatorMatrix:
        return np.array(self.entries, copy=True)


def as_matrix(rho: DensityMatrix | OperatorMatrix) -> OperatorMatrix:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    return np.asarray(rho, dtype=np.complex128)


def annihilation_op(cutoff: FockCutoff) -> OperatorMatrix:
    return np.diag(np.sqrt(np.arange(1, cutoff.local_dim, dtype=float)), k=1).astype(np.complex128)


def two_mode_operator(op: OperatorMatrix, mode: int, cutoff: FockCutoff) -> OperatorMatrix:
    op = np.asarray(op, dtype=np.complex128)
    d = cutoff.local_dim
    if op.shape != (d, d):
        raise InvariantViolation(f"single-mode operator shape {op.shape} != {(d, d)}")
    identity = np.eye(d, dtype=np.complex128)
    if mode == 1:
        return np.kron(op, identity)
    if mode == 2:
        return np.kron(identity, op)
    raise InvariantViolation(f"mode must be 1 or 2, got {mode!r}")


@lru_cache(maxsize=16)
def mode_operators(cutoff: FockCutoff) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Embedded (a1, a2), read-only."""
    a = annihilation_op(cutoff)
    a1 = two_mode_operator(a, 1, cutoff)
    a2 = two_mode_operator(a, 2, cutoff)
    a1.setflags(write=False)
    a2.setflags(write=False)
    return a1, a2


def fock_state(m: int, n: int, cutoff: FockCutoff) -> DensityMatrix:
    k = cutoff.index(m, n)
    entries = np.zeros((cutoff.dim, cutoff.dim), dtype=np.complex128)
    entries[k, k] = 1.0
    return DensityMatrix(cutoff=cutoff, entries=entries)


def pure_state(amplitudes: dict[tuple[int, int], complex], cutoff: FockCutoff) -> DensityMatrix:
    """Projector onto a normalized superposition of |m, n> basis states."""
    psi = np.zeros(cutoff.dim, dtype=np.complex128)
    for (m, n), amplitude in amplitudes.items():
        psi[cutoff.index(m, n)] = amplitude
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise InvariantViolation("pure state needs at least one nonzero amplitude")
    psi /= norm
    return DensityMatrix(cutoff=cutoff, entries=np.outer(psi, psi.conj()))


def leakage(rho: DensityMatrix | OperatorMatrix, cutoff: FockCutoff) -> float:
    """Population on |m, n> with m == n_max or n == n_max."""
    m, n = cutoff.occupations()
    edge = (m == cutoff.n_max) | (n == cutoff.n_max)
    return float(np.real(np.diagonal(as_matrix(rho))[edge]).sum())


def validate_state(
    rho: DensityMatrix | OperatorMatrix,
    tolerances: StateTolerances | None = None,
    *,
    cutoff: FockCutoff | None = None,
) -> StateDiagnostics:
    matrix = as_matrix(rho)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvariantViolation(f"state must be a square matrix, got shape {matrix.shape}")
    if cutoff is None:
        if isinstance(rho, DensityMatrix):
            cutoff = rho.cutoff
        else:
            d = int(round(np.sqrt(matrix.shape[0])))
            cutoff = FockCutoff(d - 1)
    hermitian_part = 0.5 * (matrix + matrix.conj().T)
    return StateDiagnostics(
        trace_err=float(abs(np.trace(matrix) - 1.0)),
        herm_err=float(np.max(np.abs(matrix - matrix.conj().T))),
        min_eig=float(np.linalg.eigvalsh(hermitian_part)[0]),
        leakage=leakage(matrix, cutoff),
        tolerances=tolerances or StateTolerances(),
    )


def swap_modes(rho: DensityMatrix | OperatorMatrix, cutoff: FockCutoff) -> OperatorMatrix:
    """Relabel |m, n> -> |n, m> on both sides of rho."""
    d = cutoff.local_dim
    tensor = as_matrix(rho).reshape(d, d, d, d)
    return tensor.transpose(1, 0, 3, 2).reshape(d * d, d * d).copy()


def random_state(cutoff: FockCutoff, rng: np.random.Generator, rank: int | None = None) -> OperatorMatrix:
    """Random density matrix of the given rank (full by default) from a Ginibre draw."""
    rank = cutoff.dim if rank is None else rank
    z = rng.normal(size=(cutoff.dim, rank)) + 1j * rng.normal(size=(cutoff.dim, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho)
