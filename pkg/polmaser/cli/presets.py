"""Named run configurations for the published parameter sets.

All values are in units of omega0 = 1e10 Hz: g = 9e8 Hz -> 0.09, r = 1e9 Hz -> 0.1,
kappa1 = 1e4 Hz -> 1e-6, kappa2 = 2e4 Hz -> 2e-6, tau = 1e-10 s -> 1.

No time axis was published for these curves. At these rates the field gains photons
faster than the cavity loses them, so no steady state fits under a cutoff. Each
horizon is set so the fastest series reaches p_e1 gamma_1 t = 0.5, about where its
transient maximum sits. There the linear-gain estimate of the population at n_max = 20
is near 1e-6.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

from polmaser.errors import ConfigError

CUTOFF = 20
SAMPLES = 101


def _base(g1: float, g2: float, r: float, horizon: float) -> dict[str, Any]:
    return {
        "units": "omega0",
        "interaction": {"g1": g1, "g2": g2, "r": r, "tau": 1.0, "kappa1": 1e-6, "kappa2": 2e-6, "omega0": 1e10},
        "atom": {"p_e1": 5 / 8, "p_e2": 5 / 16, "p_g": 1 / 16, "chi": "max", "xi": 0.7},
        "cutoff": CUTOFF,
        "initial_state": {"m": 1, "n": 0},
        "grid": {"t_start": 0.0, "t_end": horizon, "n_samples": SAMPLES},
        "variant": "exact",
    }


@dataclass(slots=True, frozen=True)
class Preset:
    name: str
    alias: str
    description: str
    payload: dict[str, Any] = field(repr=False)


def _xi_series(g1: float, g2: float, r: float, horizon: float) -> dict[str, Any]:
    payload = _base(g1, g2, r, horizon)
    payload["series"] = [
        {"label": "xi=0.7", "set": {"atom.xi": 0.7}},
        {"label": "xi=0.8", "set": {"atom.xi": 0.8}},
    ]
    return payload


def _rate_series(g: float, horizon: float) -> dict[str, Any]:
    payload = _base(g, g, 0.1, horizon)
    payload["series"] = [
        {"label": "r=0.1", "set": {"interaction.r": 0.1}},
        {"label": "r=0.5", "set": {"interaction.r": 0.5}},
    ]
    return payload


PRESETS: dict[str, Preset] = {
    preset.name: preset
    for preset in (
        Preset("fig2a", "xi-slow", "g1=0.09 g2=0.05, r=0.1, xi in {0.7, 0.8}", _xi_series(0.09, 0.05, 0.1, 1000.0)),
        Preset("fig2b", "xi-fast", "g1=0.09 g2=0.05, r=0.5, xi in {0.7, 0.8}", _xi_series(0.09, 0.05, 0.5, 200.0)),
        Preset("fig3a", "rate-g05", "g1=g2=0.05, xi=0.7, r in {0.1, 0.5}", _rate_series(0.05, 600.0)),
        Preset("fig3b", "rate-g09", "g1=g2=0.09, xi=0.7, r in {0.1, 0.5}", _rate_series(0.09, 200.0)),
    )
}
PRESET_ALIASES: dict[str, str] = {preset.alias: preset.name for preset in PRESETS.values()}


def preset_payload(name: str) -> dict[str, Any]:
    try:
        preset = PRESETS[PRESET_ALIASES.get(name, name)]
    except KeyError:
        known = ", ".join(sorted([*PRESETS, *PRESET_ALIASES]))
        raise ConfigError(f"unknown preset {name!r} (known: {known})", field="preset") from None
    return copy.deepcopy(preset.payload)


def describe_presets() -> list[str]:
    return [f"{preset.name:<7}{preset.alias:<10}{preset.description}" for preset in PRESETS.values()]
