"""Field observables: partial transpose, logarithmic negativity, mode populations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from polmaser.errors import InvariantViolation
from polmaser.physics.hilbert import (
    TOL_HERMITIAN,
    Bipartition,
    DensityMatrix,
    FockCutoff,
    OperatorMatrix,
    StateDiagnostics,
    as_matrix,
    mode_operators,
)

LOG_NEG_FLOOR = 1e-12


@dataclass(slots=True, frozen=True)
class ObservableRecord:
    t: float
    log_neg: float
    n1: float
    n2: float
    purity: float
    cross_coherence: complex
    trace_err: float
    min_eig: float
    leakage: float

    def as_row(self) -> tuple[float, ...]:
        return (
            self.t,
            self.log_neg,
            self.n1,
            self.n2,
            self.purity,
            self.cross_coherence.real,
            self.cross_coherence.imag,
            self.trace_err,
            self.min_eig,
            self.leakage,
        )


def partial_transpose(rho: DensityMatrix | OperatorMatrix, split: Bipartition) -> OperatorMatrix:
    matrix = as_matrix(rho)
    if matrix.shape != (split.dim, split.dim):
        raise InvariantViolation(f"state shape {matrix.shape} does not match bipartition {split}")
    da, db = split.mode_a_dim, split.mode_b_dim
    tensor = matrix.reshape(da, db, da, db)
    return tensor.transpose(2, 1, 0, 3).reshape(split.dim, split.dim)


def trace_norm_of_partial_transpose(rho: DensityMatrix | OperatorMatrix, split: Bipartition) -> float:
    eigenvalues = np.linalg.eigvalsh(partial_transpose(rho, split))
    return float(np.abs(eigenvalues).sum())


def log_negativity(
    rho: DensityMatrix | OperatorMatrix,
    split: Bipartition | None = None,
    *,
    tol_herm: float = TOL_HERMITIAN,
) -> float:
    matrix = as_matrix(rho)
    if split is None:
        local = int(round(np.sqrt(matrix.shape[0])))
        split = Bipartition(local, local)
    herm_err = float(np.max(np.abs(matrix - matrix.conj().T)))
    if herm_err > tol_herm:
        raise InvariantViolation(f"log negativity needs a Hermitian state, deviation {herm_err:.3g}")
    value = float(np.log2(trace_norm_of_partial_transpose(matrix, split)))
    return value if value > LOG_NEG_FLOOR else 0.0


def mode_observables(
    rho: DensityMatrix | OperatorMatrix, cutoff: FockCutoff | None = None
) -> tuple[float, float, float, complex]:
    """(n1, n2, purity, <a1' a2>)."""
    matrix = as_matrix(rho)
    if cutoff is None:
        cutoff = rho.cutoff if isinstance(rho, DensityMatrix) else FockCutoff(int(round(np.sqrt(matrix.shape[0]))) - 1)
    m, n = cutoff.occupations()
    populations = np.real(np.diagonal(matrix))
    a1, a2 = mode_operators(cutoff)
    # Tr(a1' a2 rho) = sum_ij (a1')_ij (a2 rho)_ji
    cross = complex(np.sum(a1.conj().T * (a2 @ matrix).T))
    return (
        float(populations @ m),
        float(populations @ n),
        float(np.real(np.sum(matrix * matrix.T))),
        cross,
    )


def observe(t: float, rho: OperatorMatrix, cutoff: FockCutoff, diagnostics: StateDiagnostics) -> ObservableRecord:
    n1, n2, purity, cross = mode_observables(rho, cutoff)
    return ObservableRecord(
        t=float(t),
        log_neg=log_negativity(rho, Bipartition.for_cutoff(cutoff), tol_herm=diagnostics.tolerances.tol_herm),
        n1=n1,
        n2=n2,
        purity=purity,
        cross_coherence=cross,
        trace_err=diagnostics.trace_err,
        min_eig=diagnostics.min_eig,
        leakage=diagnostics.leakage,
    )
