"""Single-atom collision with the two-mode field.

Atom levels are ordered (e1, e2, g) and the joint space is atom-major: the state
|a> x |m, n> sits at ``a * d**2 + m * d + n``.

Each block {|e1, m-1, n>, |e2, m, n-1>, |g, m, n>} evolves under a closed form in
Omega = sqrt(g1^2 m + g2^2 n). The often quoted variant built on
lambda = sqrt((g1^2 m + g2^2 n) / 2), with mixed sin(lambda tau / 2) and
sin(lambda tau) arguments and 2 lambda^2 denominators, is not unitary and does not
reduce to the identity at tau = 0, so it is not used. The blocks are checked one by
one against ``propagator_numeric`` (the eigendecomposition of H_I). A block is
labelled by its ground component |g, m, n>.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import sparse

from polmaser.errors import InvariantViolation
from polmaser.physics.hilbert import (
    DensityMatrix,
    FockCutoff,
    OperatorMatrix,
    as_matrix,
    mode_operators,
)

logger = logging.getLogger(__name__)

E1, E2, G = 0, 1, 2
_PROBABILITY_SLACK = 1e-12


@dataclass(slots=True, frozen=True)
class AtomPreparation:
    p_e1: float
    p_e2: float
    p_g: float
    chi: float = 0.0
    xi: float = 1.0

    def __post_init__(self) -> None:
        for name in ("p_e1", "p_e2", "p_g"):
            value = getattr(self, name)
            if not math.isfinite(value) or not (-_PROBABILITY_SLACK <= value <= 1.0 + _PROBABILITY_SLACK):
                raise InvariantViolation(f"{name} must be a probability, got {value!r}")
        total = self.p_e1 + self.p_e2 + self.p_g
        if abs(total - 1.0) > 1e-9:
            raise InvariantViolation(f"populations must sum to 1, got {total!r}")
        if not math.isfinite(self.chi) or abs(self.chi) > math.sqrt(max(self.p_e1 * self.p_e2, 0.0)) + 1e-12:
            raise InvariantViolation(
                f"|chi| must not exceed sqrt(p_e1 * p_e2) = {math.sqrt(max(self.p_e1 * self.p_e2, 0.0)):.6g}, "
                f"got {self.chi!r}"
            )
        if not (0.0 <= self.xi <= 1.0):
            raise InvariantViolation(f"xi must lie in [0, 1], got {self.xi!r}")

    @classmethod
    def with_max_coherence(cls, p_e1: float, p_e2: float, p_g: float, xi: float = 1.0) -> "AtomPreparation":
        return cls(p_e1=p_e1, p_e2=p_e2, p_g=p_g, chi=math.sqrt(p_e1 * p_e2), xi=xi)

    @classmethod
    def ground(cls) -> "AtomPreparation":
        return cls(p_e1=0.0, p_e2=0.0, p_g=1.0)

    @property
    def coherence(self) -> float:
        return self.chi * self.xi

    def density_matrix(self) -> OperatorMatrix:
        c = self.coherence
        return np.array(
            [
                [self.p_e1, c, 0.0],
                [c, self.p_e2, 0.0],
                [0.0, 0.0, self.p_g],
            ],
            dtype=np.complex128,
        )

    def swapped(self) -> "AtomPreparation":
        return replace(self, p_e1=self.p_e2, p_e2=self.p_e1)


@dataclass(slots=True, frozen=True)
class InteractionParams:
    """Couplings, arrival rate, flight time and losses in units of omega0.

    ``omega0`` is the physical scale (Hz) the dimensionless values refer to; it never
    enters the dynamics.
    """

    g1: float
    g2: float
    r: float
    tau: float
    kappa1: float = 0.0
    kappa2: float = 0.0
    omega0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("g1", "g2", "r", "tau", "kappa1", "kappa2"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvariantViolation(f"{name} must be a nonnegative number, got {value!r}")
        if not math.isfinite(self.omega0) or self.omega0 <= 0:
            raise InvariantViolation(f"omega0 must be positive, got {self.omega0!r}")

    @classmethod
    def from_physical(
        cls,
        *,
        g1: float,
        g2: float,
        r: float,
        tau: float,
        kappa1: float,
        kappa2: float,
        omega0: float,
    ) -> "InteractionParams":
        """Rates in Hz and tau in seconds, scaled by omega0 in Hz."""
        if omega0 <= 0:
            raise InvariantViolation(f"omega0 must be positive, got {omega0!r}")
        return cls(
            g1=g1 / omega0,
            g2=g2 / omega0,
            r=r / omega0,
            tau=tau * omega0,
            kappa1=kappa1 / omega0,
            kappa2=kappa2 / omega0,
            omega0=omega0,
        )

    def swapped(self) -> "InteractionParams":
        return replace(self, g1=self.g2, g2=self.g1, kappa1=self.kappa2, kappa2=self.kappa1)

    def max_rabi_frequency(self, cutoff: FockCutoff) -> float:
        return math.sqrt((self.g1**2 + self.g2**2) * cutoff.n_max)


@dataclass(slots=True, frozen=True, eq=False)
class PropagatorBlock:
    m: int
    n: int
    c1: float
    c2: float
    omega: float
    u: OperatorMatrix = field(repr=False)
    basis: tuple[tuple[int, int, int], ...] = ()

    @property
    def size(self) -> int:
        return self.u.shape[0]


def interaction_hamiltonian(params: InteractionParams, cutoff: FockCutoff) -> OperatorMatrix:
    a1, a2 = mode_operators(cutoff)
    raise_1 = np.zeros((3, 3), dtype=np.complex128)
    raise_1[E1, G] = 1.0
    raise_2 = np.zeros((3, 3), dtype=np.complex128)
    raise_2[E2, G] = 1.0
    absorb = params.g1 * np.kron(raise_1, a1) + params.g2 * np.kron(raise_2, a2)
    return absorb + absorb.conj().T


def propagator_numeric(params: InteractionParams, cutoff: FockCutoff, tau: float | None = None) -> OperatorMatrix:
    tau = params.tau if tau is None else tau
    energies, vectors = np.linalg.eigh(interaction_hamiltonian(params, cutoff))
    return (vectors * np.exp(-1j * energies * tau)) @ vectors.conj().T


def propagator_block(m: int, n: int, params: InteractionParams, tau: float | None = None) -> PropagatorBlock:
    if m < 0 or n < 0:
        raise InvariantViolation(f"photon numbers must be nonnegative, got ({m}, {n})")
    tau = params.tau if tau is None else tau
    c1 = params.g1 * math.sqrt(m)
    c2 = params.g2 * math.sqrt(n)
    omega = math.hypot(c1, c2)

    if omega > 0.0:
        # cos(x) - 1 written as -2 sin^2(x/2) keeps small-tau blocks accurate
        bend = -2.0 * math.sin(0.5 * omega * tau) ** 2 / omega**2
        swing = -1j * math.sin(omega * tau) / omega
        cos_t = math.cos(omega * tau)
    else:
        bend, swing, cos_t = 0.0, 0.0, 1.0

    full = np.array(
        [
            [1.0 + c1 * c1 * bend, c1 * c2 * bend, c1 * swing],
            [c1 * c2 * bend, 1.0 + c2 * c2 * bend, c2 * swing],
            [c1 * swing, c2 * swing, cos_t],
        ],
        dtype=np.complex128,
    )
    basis = [(E1, m - 1, n), (E2, m, n - 1), (G, m, n)]
    keep = [i for i, (_, p, q) in enumerate(basis) if p >= 0 and q >= 0]
    return PropagatorBlock(
        m=m,
        n=n,
        c1=c1,
        c2=c2,
        omega=omega,
        u=full[np.ix_(keep, keep)],
        basis=tuple(basis[i] for i in keep),
    )


@lru_cache(maxsize=64)
def field_unitary_blocks(
    params: InteractionParams, cutoff: FockCutoff, tau: float
) -> tuple[tuple[sparse.csr_array, ...], ...]:
    """U split as sum_ab |a><b| x U_ab, each U_ab a sparse field operator.

    Atom-field states with no in-range ground partner, |e1, n_max, q> and
    |e2, p, n_max>, are decoupled by the truncated H_I and carried with U = 1.
    """
    dim = cutoff.dim
    rows: dict[tuple[int, int], list[int]] = {(a, b): [] for a in range(3) for b in range(3)}
    cols: dict[tuple[int, int], list[int]] = {(a, b): [] for a in range(3) for b in range(3)}
    vals: dict[tuple[int, int], list[complex]] = {(a, b): [] for a in range(3) for b in range(3)}

    for m in range(cutoff.local_dim):
        for n in range(cutoff.local_dim):
            block = propagator_block(m, n, params, tau)
            for i, (a, p, q) in enumerate(block.basis):
                for j, (b, s, t) in enumerate(block.basis):
                    value = block.u[i, j]
                    if value == 0:
                        continue
                    rows[a, b].append(cutoff.index(p, q))
                    cols[a, b].append(cutoff.index(s, t))
                    vals[a, b].append(value)

    for q in range(cutoff.local_dim):
        edge_1 = cutoff.index(cutoff.n_max, q)
        rows[E1, E1].append(edge_1)
        cols[E1, E1].append(edge_1)
        vals[E1, E1].append(1.0)
        edge_2 = cutoff.index(q, cutoff.n_max)
        rows[E2, E2].append(edge_2)
        cols[E2, E2].append(edge_2)
        vals[E2, E2].append(1.0)

    logger.debug("built collision blocks for n_max=%d tau=%g", cutoff.n_max, tau)
    return tuple(
        tuple(
            sparse.csr_array(
                (np.asarray(vals[a, b], dtype=np.complex128), (rows[a, b], cols[a, b])),
                shape=(dim, dim),
            )
            for b in range(3)
        )
        for a in range(3)
    )


def sandwich(op: sparse.csr_array, rho: OperatorMatrix) -> OperatorMatrix:
    """op @ rho @ op^dagger with a sparse op and a dense rho."""
    left = op @ rho
    return (op @ left.conj().T).conj().T


class CollisionMap:
    """M(tau): trace over the atom after one flight, held as Kraus operators."""

    def __init__(
        self,
        atom: AtomPreparation,
        params: InteractionParams,
        cutoff: FockCutoff,
        tau: float | None = None,
    ) -> None:
        self.atom = atom
        self.params = params
        self.cutoff = cutoff
        self.tau = params.tau if tau is None else float(tau)
        blocks = field_unitary_blocks(params, cutoff, self.tau)

        weights, vectors = np.linalg.eigh(atom.density_matrix())
        self.kraus: list[sparse.csr_array] = []
        for weight, vector in zip(weights, vectors.T):
            if weight <= 1e-15:
                continue
            amplitude = math.sqrt(weight)
            for a in range(3):
                op = sum(
                    (complex(amplitude * vector[b]) * blocks[a][b] for b in range(3) if vector[b] != 0),
                    start=sparse.csr_array((cutoff.dim, cutoff.dim), dtype=np.complex128),
                )
                if op.nnz:
                    self.kraus.append(sparse.csr_array(op))

        m, n = cutoff.occupations()
        self._edge_1 = m == cutoff.n_max
        self._edge_2 = n == cutoff.n_max

    def apply(self, rho: OperatorMatrix) -> OperatorMatrix:
        out = np.zeros_like(rho, dtype=np.complex128)
        for op in self.kraus:
            out += sandwich(op, rho)
        return out

    __call__ = apply

    def clipped_weight(self, rho: DensityMatrix | OperatorMatrix) -> float:
        """Weight of rho_A x rho on atom-field states cut off by the truncation."""
        diag = np.real(np.diagonal(as_matrix(rho)))
        return float(self.atom.p_e1 * diag[self._edge_1].sum() + self.atom.p_e2 * diag[self._edge_2].sum())


@lru_cache(maxsize=64)
def collision_map(
    atom: AtomPreparation, params: InteractionParams, cutoff: FockCutoff, tau: float | None = None
) -> CollisionMap:
    return CollisionMap(atom, params, cutoff, tau)


def apply_collision_map(
    atom: AtomPreparation,
    rho_f: DensityMatrix,
    params: InteractionParams,
    tau: float | None = None,
) -> DensityMatrix:
    mapped = collision_map(atom, params, rho_f.cutoff, tau).apply(rho_f.entries)
    return DensityMatrix(cutoff=rho_f.cutoff, entries=mapped)


def excitation_number(cutoff: FockCutoff) -> OperatorMatrix:
    """a1'a1 + a2'a2 + |e1><e1| + |e2><e2| on atom x field."""
    m, n = cutoff.occupations()
    photons = np.diag((m + n).astype(np.complex128))
    excited = np.diag(np.array([1.0, 1.0, 0.0], dtype=np.complex128))
    return np.kron(np.eye(3), photons) + np.kron(excited, np.eye(cutoff.dim))


def choi_matrix(linear_map: Callable[[OperatorMatrix], OperatorMatrix], cutoff: FockCutoff) -> OperatorMatrix:
    """J[(i, k), (j, l)] = Phi(|i><j|)[k, l]."""
    dim = cutoff.dim
    choi = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
    unit = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim):
        for j in range(dim):
            unit[i, j] = 1.0
            choi[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = linear_map(unit)
            unit[i, j] = 0.0
    return choi


def random_atom(rng: np.random.Generator) -> AtomPreparation:
    """Uniform populations on the simplex, coherence and dephasing drawn in range."""
    p_e1, p_e2, p_g = rng.dirichlet(np.ones(3))
    bound = math.sqrt(p_e1 * p_e2)
    return AtomPreparation(
        p_e1=float(p_e1),
        p_e2=float(p_e2),
        p_g=float(1.0 - p_e1 - p_e2),
        chi=float(rng.uniform(-bound, bound)),
        xi=float(rng.uniform(0.0, 1.0)),
    )
