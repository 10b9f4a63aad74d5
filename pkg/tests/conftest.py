from __future__ import annotations

import copy
from typing import Any

import numpy as np
import pytest

from polmaser.physics.atom_field import AtomPreparation, InteractionParams
from polmaser.physics.hilbert import FockCutoff

SMALL_PAYLOAD: dict[str, Any] = {
    "units": "omega0",
    "interaction": {"g1": 0.9, "g2": 0.5, "r": 0.5, "tau": 1.0, "kappa1": 0.01, "kappa2": 0.02},
    "atom": {"p_e1": 0.625, "p_e2": 0.3125, "p_g": 0.0625, "chi": "max", "xi": 0.7},
    "cutoff": 3,
    "initial_state": {"m": 1, "n": 0},
    "grid": {"t_end": 4.0, "n_samples": 5},
}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def cutoff() -> FockCutoff:
    return FockCutoff(3)


@pytest.fixture
def coherent_atom() -> AtomPreparation:
    return AtomPreparation.with_max_coherence(5 / 8, 5 / 16, 1 / 16, xi=0.7)


@pytest.fixture
def strong_params() -> InteractionParams:
    return InteractionParams(g1=0.9, g2=0.5, r=0.5, tau=1.0, kappa1=0.01, kappa2=0.02)


@pytest.fixture
def small_payload() -> dict[str, Any]:
    return copy.deepcopy(SMALL_PAYLOAD)
