"""Right-hand sides for the field master equation.

Two generators are available. ``ExactMap`` is r[M(tau) - 1] plus cavity losses.
``SecondOrder`` is its expansion to order tau^2 in Lindblad form.

Expanding Tr_A[U (rho_A x rho) U'] gives M(tau) - 1 = tau^2 L_2 + O(tau^4); odd orders
vanish because each H_I factor moves the atom between {e1, e2} and {g} and rho_A has
no e-g coherence. The tau^2 coefficients are g_i g_j tau^2, so the rates that make the
expansion consistent are r tau^2 g_i g_j. The commonly quoted rates carry an extra 1/2;
``RateConvention.HALVED`` reproduces them, ``RateConvention.EXPANSION`` (default) uses
the consistent ones. No other second-order terms appear: absorption cross terms
a1 rho a2' are weighted by <e1|e2> p_g = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import sparse
from scipy.special import comb

from polmaser.errors import InvariantViolation
from polmaser.physics.atom_field import AtomPreparation, InteractionParams, collision_map
from polmaser.physics.hilbert import FockCutoff, OperatorMatrix, mode_operators

logger = logging.getLogger(__name__)


class GeneratorVariant(StrEnum):
    EXACT = "exact"
    SECOND_ORDER = "second-order"


class RateConvention(StrEnum):
    EXPANSION = "expansion"
    HALVED = "halved"


@dataclass(slots=True, frozen=True)
class EffectiveRates:
    gamma1: float
    gamma2: float
    gamma12: float

    def __post_init__(self) -> None:
        if min(self.gamma1, self.gamma2, self.gamma12) < 0:
            raise InvariantViolation("effective rates must be nonnegative")


@dataclass(slots=True, frozen=True)
class GeneratorSpec:
    variant: GeneratorVariant
    params: InteractionParams
    atom: AtomPreparation
    cutoff: FockCutoff
    rate_convention: RateConvention = RateConvention.EXPANSION

    def rates(self) -> EffectiveRates:
        if self.rate_convention is RateConvention.HALVED:
            return effective_rates(self.params)
        return expansion_rates(self.params)


def effective_rates(params: InteractionParams) -> EffectiveRates:
    """Halved rates: gamma_ij = r tau^2 g_i g_j / 2."""
    scale = 0.5 * params.r * params.tau**2
    return EffectiveRates(
        gamma1=scale * params.g1**2,
        gamma2=scale * params.g2**2,
        gamma12=scale * params.g1 * params.g2,
    )


def expansion_rates(params: InteractionParams) -> EffectiveRates:
    """Rates of the tau^2 term of r[M(tau) - 1]: r tau^2 g_i g_j."""
    halved = effective_rates(params)
    return EffectiveRates(
        gamma1=2.0 * halved.gamma1,
        gamma2=2.0 * halved.gamma2,
        gamma12=2.0 * halved.gamma12,
    )


def photon_gain(spec: GeneratorSpec) -> tuple[float, float]:
    """Growth exponents of <n1> and <n2> at second order: (p_ei - p_g) gamma_i - kappa_i.

    A positive entry means the field has no steady state below any cutoff; the
    truncated run then ends up leaking.
    """
    rates = spec.rates()
    atom, params = spec.atom, spec.params
    return (
        (atom.p_e1 - atom.p_g) * rates.gamma1 - params.kappa1,
        (atom.p_e2 - atom.p_g) * rates.gamma2 - params.kappa2,
    )


def _dagger(op: Any) -> Any:
    return op.conj().T


def _right_multiply(rho: OperatorMatrix, op: Any) -> OperatorMatrix:
    # rho @ op through the left product keeps op sparse-capable
    return _dagger(_dagger(op) @ _dagger(rho))


def dissipator(x: Any, y: Any, rho: OperatorMatrix, *, x_dag_y: Any = None) -> OperatorMatrix:
    """D[x, y] rho = x rho y' - {x' y, rho} / 2."""
    rho = np.asarray(rho)
    if x.shape != y.shape or x.shape != rho.shape:
        raise InvariantViolation(f"dissipator shapes differ: x {x.shape}, y {y.shape}, rho {rho.shape}")
    if x_dag_y is None:
        x_dag_y = _dagger(x) @ y
    jump = _right_multiply(x @ rho, _dagger(y))
    return jump - 0.5 * (x_dag_y @ rho + _right_multiply(rho, x_dag_y))


@dataclass(slots=True, frozen=True)
class _Channel:
    rate: float
    x: sparse.csr_array
    y: sparse.csr_array
    x_dag_y: sparse.csr_array


def _channel(rate: float, x: sparse.csr_array, y: sparse.csr_array) -> _Channel:
    return _Channel(rate=rate, x=x, y=y, x_dag_y=sparse.csr_array(_dagger(x) @ y))


class Generator:
    """Matrix-free evaluator of rho_dot = G(rho); never builds the superoperator."""

    def __init__(self, spec: GeneratorSpec) -> None:
        self.spec = spec
        a1_dense, a2_dense = mode_operators(spec.cutoff)
        a1 = sparse.csr_array(a1_dense)
        a2 = sparse.csr_array(a2_dense)
        a1_up = sparse.csr_array(_dagger(a1))
        a2_up = sparse.csr_array(_dagger(a2))
        params, atom = spec.params, spec.atom

        self.loss_channels = [
            _channel(params.kappa1, a1, a1),
            _channel(params.kappa2, a2, a2),
        ]
        self.cross_channels: list[_Channel] = []
        self.local_channels: list[_Channel] = []
        self.collision = None

        if spec.variant is GeneratorVariant.EXACT:
            if params.r > 0:
                self.collision = collision_map(atom, params, spec.cutoff)
        else:
            rates = spec.rates()
            self.local_channels = [
                _channel(rates.gamma1 * atom.p_g, a1, a1),
                _channel(rates.gamma2 * atom.p_g, a2, a2),
                _channel(rates.gamma1 * atom.p_e1, a1_up, a1_up),
                _channel(rates.gamma2 * atom.p_e2, a2_up, a2_up),
            ]
            cross_rate = rates.gamma12 * atom.coherence
            self.cross_channels = [
                _channel(cross_rate, a1_up, a2_up),
                _channel(cross_rate, a2_up, a1_up),
            ]
        logger.debug("generator ready: %s n_max=%d", spec.variant.value, spec.cutoff.n_max)

    @staticmethod
    def _apply_channels(channels: list[_Channel], rho: OperatorMatrix, out: OperatorMatrix) -> None:
        for channel in channels:
            if channel.rate != 0.0:
                out += channel.rate * dissipator(channel.x, channel.y, rho, x_dag_y=channel.x_dag_y)

    def cross_term(self, rho: OperatorMatrix) -> OperatorMatrix:
        out = np.zeros_like(rho, dtype=np.complex128)
        self._apply_channels(self.cross_channels, rho, out)
        return out

    def __call__(self, rho: OperatorMatrix) -> OperatorMatrix:
        rho = np.asarray(rho, dtype=np.complex128)
        out = np.zeros_like(rho)
        if self.collision is not None:
            out += self.spec.params.r * (self.collision.apply(rho) - rho)
        self._apply_channels(self.local_channels, rho, out)
        self._apply_channels(self.cross_channels, rho, out)
        self._apply_channels(self.loss_channels, rho, out)
        return out


@lru_cache(maxsize=32)
def build_generator(spec: GeneratorSpec) -> Generator:
    return Generator(spec)


def generator_second_order(spec: GeneratorSpec, rho: OperatorMatrix) -> OperatorMatrix:
    if spec.variant is not GeneratorVariant.SECOND_ORDER:
        raise InvariantViolation(f"expected a second-order spec, got {spec.variant.value}")
    return build_generator(spec)(rho)


def generator_exact(spec: GeneratorSpec, rho: OperatorMatrix) -> OperatorMatrix:
    if spec.variant is not GeneratorVariant.EXACT:
        raise InvariantViolation(f"expected an exact-map spec, got {spec.variant.value}")
    return build_generator(spec)(rho)


def cross_dissipator(spec: GeneratorSpec, rho: OperatorMatrix) -> OperatorMatrix:
    """gamma12 chi xi (D[a1', a2'] + D[a2', a1']) rho, the only mode-coupling term."""
    second_order = spec if spec.variant is GeneratorVariant.SECOND_ORDER else _as_second_order(spec)
    return build_generator(second_order).cross_term(np.asarray(rho, dtype=np.complex128))


def _as_second_order(spec: GeneratorSpec) -> GeneratorSpec:
    return GeneratorSpec(
        variant=GeneratorVariant.SECOND_ORDER,
        params=spec.params,
        atom=spec.atom,
        cutoff=spec.cutoff,
        rate_convention=spec.rate_convention,
    )


def damping_kraus(eta: float, local_dim: int) -> np.ndarray:
    """Single-mode amplitude damping with transmissivity eta, shape (k, d, d)."""
    if not (0.0 <= eta <= 1.0):
        raise InvariantViolation(f"transmissivity must lie in [0, 1], got {eta!r}")
    kraus = np.zeros((local_dim, local_dim, local_dim), dtype=np.complex128)
    for k in range(local_dim):
        for n in range(k, local_dim):
            kraus[k, n - k, n] = math.sqrt(comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
    return kraus


def loss_channel(rho: OperatorMatrix, kappa1: float, kappa2: float, t: float, cutoff: FockCutoff) -> OperatorMatrix:
    """Exact solution of rho_dot = kappa1 D[a1] rho + kappa2 D[a2] rho after time t."""
    if t < 0:
        raise InvariantViolation(f"loss time must be nonnegative, got {t!r}")
    d = cutoff.local_dim
    tensor = np.asarray(rho, dtype=np.complex128).reshape(d, d, d, d)
    if kappa1 > 0 and t > 0:
        k1 = damping_kraus(math.exp(-kappa1 * t), d)
        tensor = np.einsum("kam,mnpq,kbp->anbq", k1, tensor, k1.conj(), optimize=True)
    if kappa2 > 0 and t > 0:
        k2 = damping_kraus(math.exp(-kappa2 * t), d)
        tensor = np.einsum("kan,mnpq,kbq->mapb", k2, tensor, k2.conj(), optimize=True)
    return tensor.reshape(d * d, d * d).copy()
