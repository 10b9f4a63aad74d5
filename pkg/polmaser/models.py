"""Typed models for run configuration documents."""

from __future__ import annotations

import copy
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from polmaser.errors import ConfigError, InvariantViolation
from polmaser.physics.atom_field import AtomPreparation, InteractionParams
from polmaser.physics.evolve import SolverConfig, TimeGrid
from polmaser.physics.hilbert import DensityMatrix, FockCutoff, fock_state
from polmaser.physics.master_eq import GeneratorSpec, GeneratorVariant, RateConvention

UNITS = ("omega0", "hz")

_TOP_LEVEL = {
    "units",
    "interaction",
    "atom",
    "cutoff",
    "initial_state",
    "grid",
    "solver",
    "variant",
    "rate_convention",
    "output",
    "monte_carlo",
    "series",
    "description",
}
_SECTION_KEYS = {
    "interaction": {"g1", "g2", "r", "tau", "kappa1", "kappa2", "omega0"},
    "atom": {"p_e1", "p_e2", "p_g", "chi", "xi"},
    "initial_state": {"m", "n"},
    "grid": {"t_start", "t_end", "n_samples"},
    "solver": {"rel_tol", "abs_tol", "max_step", "validation_cadence", "retain_states"},
    "output": {"dir"},
    "monte_carlo": {"n_traj", "seed"},
}


def load_payload(path: Path) -> dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return payload


def parse_scalar(raw: str) -> Any:
    """JSON scalar when it parses as one, the raw text otherwise."""
    text = raw.strip()
    try:
        value = json.loads(text)
    except ValueError:
        return text
    if isinstance(value, (dict, list)):
        return text
    return value


def parse_override(item: str) -> tuple[str, Any]:
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value", field=key or None)
    return key, parse_scalar(raw)


def apply_overrides(payload: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Deep copy of ``payload`` with dotted keys (``atom.xi``) replaced."""
    result = copy.deepcopy(dict(payload))
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        if not all(parts):
            raise ConfigError(f"malformed key {dotted!r}", field=dotted)
        if parts[0] not in _TOP_LEVEL:
            raise ConfigError("unknown config field", field=dotted)
        if len(parts) > 1 and parts[1] not in _SECTION_KEYS.get(parts[0], set()):
            raise ConfigError("unknown config field", field=dotted)
        if len(parts) > 2:
            raise ConfigError("config fields nest at most one level deep", field=dotted)
        node = result
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError("cannot override inside a non-object value", field=dotted)
            node = child
        node[parts[-1]] = copy.deepcopy(value)
    return result


def _section(payload: Mapping[str, Any], name: str, *, required: bool = True) -> dict[str, Any]:
    value = payload.get(name)
    if value is None:
        if required:
            raise ConfigError("section is missing", field=name)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("section must be an object", field=name)
    unknown = sorted(set(value) - _SECTION_KEYS[name])
    if unknown:
        raise ConfigError("unknown config field", field=f"{name}.{unknown[0]}")
    return value


def _number(section: Mapping[str, Any], key: str, prefix: str, default: float | None = None) -> float:
    field = f"{prefix}.{key}"
    if key not in section or section[key] is None:
        if default is None:
            raise ConfigError("value is missing", field=field)
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", field=field)
    return float(value)


def _integer(section: Mapping[str, Any], key: str, prefix: str, default: int | None = None) -> int:
    field = f"{prefix}.{key}" if prefix else key
    if key not in section or section[key] is None:
        if default is None:
            raise ConfigError("value is missing", field=field)
        return default
    value = section[key]
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=field)
    return value


def _checked(field: str, build: Any) -> Any:
    try:
        return build()
    except InvariantViolation as exc:
        raise ConfigError(exc.message, field=field) from exc


@dataclass(slots=True, frozen=True)
class InitialStateSpec:
    m: int = 1
    n: int = 0

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "InitialStateSpec":
        section = _section(payload, "initial_state", required=False)
        return cls(
            m=_integer(section, "m", "initial_state", 1),
            n=_integer(section, "n", "initial_state", 0),
        )

    def density(self, cutoff: FockCutoff) -> DensityMatrix:
        return _checked("initial_state", lambda: fock_state(self.m, self.n, cutoff))

    def swapped(self) -> "InitialStateSpec":
        return InitialStateSpec(m=self.n, n=self.m)


@dataclass(slots=True, frozen=True)
class OutputSpec:
    directory: Path | None = None

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "OutputSpec":
        section = _section(payload, "output", required=False)
        raw = section.get("dir")
        if raw is None:
            return cls()
        if not isinstance(raw, str) or not raw.strip():
            raise ConfigError("expected a directory path", field="output.dir")
        return cls(directory=Path(raw.strip()))


@dataclass(slots=True, frozen=True)
class MonteCarloSpec:
    n_traj: int
    seed: int

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "MonteCarloSpec | None":
        if payload.get("monte_carlo") is None:
            return None
        section = _section(payload, "monte_carlo")
        n_traj = _integer(section, "n_traj", "monte_carlo", 500)
        seed = _integer(section, "seed", "monte_carlo", 0)
        if n_traj < 2:
            raise ConfigError("an ensemble needs at least 2 trajectories", field="monte_carlo.n_traj")
        if not (0 <= seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer", field="monte_carlo.seed")
        return cls(n_traj=n_traj, seed=seed)


@dataclass(slots=True, frozen=True)
class SeriesSpec:
    label: str
    overrides: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any], index: int) -> "SeriesSpec":
        field = f"series[{index}]"
        if not isinstance(payload, dict):
            raise ConfigError("series entry must be an object", field=field)
        label = payload.get("label")
        if not isinstance(label, str) or not label.strip():
            raise ConfigError("series needs a label", field=f"{field}.label")
        if any(ch in label for ch in "/\\"):
            raise ConfigError("label must not contain path separators", field=f"{field}.label")
        overrides = payload.get("set") or {}
        if not isinstance(overrides, dict):
            raise ConfigError("'set' must map dotted keys to values", field=f"{field}.set")
        if any(key == "series" or key.startswith("series.") for key in overrides):
            raise ConfigError("a series cannot redefine series", field=f"{field}.set")
        return cls(label=label.strip(), overrides=tuple(sorted(overrides.items())))


@dataclass(slots=True, frozen=True)
class RunConfig:
    units: str
    params: InteractionParams
    atom: AtomPreparation
    cutoff: FockCutoff
    initial: InitialStateSpec
    grid: TimeGrid
    solver: SolverConfig
    variant: GeneratorVariant
    rate_convention: RateConvention
    output: OutputSpec
    monte_carlo: MonteCarloSpec | None
    series: tuple[SeriesSpec, ...]
    payload: Mapping[str, Any]

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any], *, default_cutoff: int = 10) -> "RunConfig":
        if not isinstance(payload, Mapping):
            raise ConfigError("config document must be an object")
        unknown = sorted(set(payload) - _TOP_LEVEL)
        if unknown:
            raise ConfigError("unknown config field", field=unknown[0])
        units = payload.get("units")
        if units not in UNITS:
            raise ConfigError(f"must be one of {', '.join(UNITS)}, got {units!r}", field="units")
        scale = 1.0
        interaction = _section(payload, "interaction")
        if units == "hz":
            scale = _number(interaction, "omega0", "interaction")
            if scale <= 0:
                raise ConfigError("omega0 must be positive", field="interaction.omega0")

        params = _checked(
            "interaction",
            lambda: InteractionParams(
                g1=_number(interaction, "g1", "interaction") / scale,
                g2=_number(interaction, "g2", "interaction") / scale,
                r=_number(interaction, "r", "interaction") / scale,
                tau=_number(interaction, "tau", "interaction") * scale,
                kappa1=_number(interaction, "kappa1", "interaction", 0.0) / scale,
                kappa2=_number(interaction, "kappa2", "interaction", 0.0) / scale,
                omega0=_number(interaction, "omega0", "interaction", 1.0),
            ),
        )
        if params.tau <= 0:
            raise ConfigError("flight time must be positive", field="interaction.tau")

        atom_section = _section(payload, "atom")
        p_e1 = _number(atom_section, "p_e1", "atom")
        p_e2 = _number(atom_section, "p_e2", "atom")
        p_g = _number(atom_section, "p_g", "atom")
        xi = _number(atom_section, "xi", "atom", 1.0)
        if atom_section.get("chi") == "max":
            atom = _checked("atom", lambda: AtomPreparation.with_max_coherence(p_e1, p_e2, p_g, xi))
        else:
            chi = _number(atom_section, "chi", "atom", 0.0)
            atom = _checked("atom", lambda: AtomPreparation(p_e1=p_e1, p_e2=p_e2, p_g=p_g, chi=chi, xi=xi))

        cutoff = _checked("cutoff", lambda: FockCutoff(_integer(payload, "cutoff", "", default_cutoff)))
        initial = InitialStateSpec.from_payload(payload)
        initial.density(cutoff)

        grid_section = _section(payload, "grid")
        grid = _checked(
            "grid",
            lambda: TimeGrid(
                t_end=_number(grid_section, "t_end", "grid") * scale,
                n_samples=_integer(grid_section, "n_samples", "grid"),
                t_start=_number(grid_section, "t_start", "grid", 0.0) * scale,
            ),
        )

        solver_section = _section(payload, "solver", required=False)
        max_step = solver_section.get("max_step")
        retain = solver_section.get("retain_states", False)
        if not isinstance(retain, bool):
            raise ConfigError("expected true or false", field="solver.retain_states")
        solver = _checked(
            "solver",
            lambda: SolverConfig(
                rel_tol=_number(solver_section, "rel_tol", "solver", 1e-8),
                abs_tol=_number(solver_section, "abs_tol", "solver", 1e-10),
                max_step=None if max_step is None else _number(solver_section, "max_step", "solver") * scale,
                validation_cadence=_integer(solver_section, "validation_cadence", "solver", 1),
                retain_states=retain,
            ),
        )

        try:
            variant = GeneratorVariant(payload.get("variant", GeneratorVariant.EXACT.value))
        except ValueError as exc:
            raise ConfigError("must be 'exact' or 'second-order'", field="variant") from exc
        try:
            rate_convention = RateConvention(payload.get("rate_convention", RateConvention.EXPANSION.value))
        except ValueError as exc:
            raise ConfigError("must be 'expansion' or 'halved'", field="rate_convention") from exc

        raw_series = payload.get("series") or []
        if not isinstance(raw_series, list):
            raise ConfigError("series must be a list", field="series")
        series = tuple(SeriesSpec.from_payload(item, i) for i, item in enumerate(raw_series))
        labels = [item.label for item in series]
        if len(set(labels)) != len(labels):
            raise ConfigError("series labels must be unique", field="series")

        return cls(
            units=str(units),
            params=params,
            atom=atom,
            cutoff=cutoff,
            initial=initial,
            grid=grid,
            solver=solver,
            variant=variant,
            rate_convention=rate_convention,
            output=OutputSpec.from_payload(payload),
            monte_carlo=MonteCarloSpec.from_payload(payload),
            series=series,
            payload=copy.deepcopy(dict(payload)),
        )

    @classmethod
    def from_file(cls, path: Path, *, default_cutoff: int = 10) -> "RunConfig":
        return cls.from_payload(load_payload(path), default_cutoff=default_cutoff)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        if not overrides:
            return self
        return RunConfig.from_payload(apply_overrides(self.payload, overrides), default_cutoff=self.cutoff.n_max)

    def expand_series(self) -> list[tuple[str, "RunConfig"]]:
        """One (label, config) per E_N curve; a run without series is a single 'main' curve."""
        if not self.series:
            return [("main", self)]
        base = dict(self.payload)
        base.pop("series", None)
        expanded = []
        for item in self.series:
            payload = apply_overrides(base, dict(item.overrides))
            expanded.append((item.label, RunConfig.from_payload(payload, default_cutoff=self.cutoff.n_max)))
        return expanded

    def generator_spec(self, cutoff: FockCutoff | None = None) -> GeneratorSpec:
        return GeneratorSpec(
            variant=self.variant,
            params=self.params,
            atom=self.atom,
            cutoff=cutoff or self.cutoff,
            rate_convention=self.rate_convention,
        )

    def resolved(self) -> dict[str, Any]:
        """Dimensionless view of the run for the manifest."""
        return {
            "units": "omega0",
            "interaction": {
                "g1": self.params.g1,
                "g2": self.params.g2,
                "r": self.params.r,
                "tau": self.params.tau,
                "kappa1": self.params.kappa1,
                "kappa2": self.params.kappa2,
                "omega0": self.params.omega0,
            },
            "atom": {
                "p_e1": self.atom.p_e1,
                "p_e2": self.atom.p_e2,
                "p_g": self.atom.p_g,
                "chi": self.atom.chi,
                "xi": self.atom.xi,
            },
            "cutoff": self.cutoff.n_max,
            "initial_state": {"m": self.initial.m, "n": self.initial.n},
            "grid": {"t_start": self.grid.t_start, "t_end": self.grid.t_end, "n_samples": self.grid.n_samples},
            "solver": {
                "rel_tol": self.solver.rel_tol,
                "abs_tol": self.solver.abs_tol,
                "max_step": self.solver.max_step,
                "validation_cadence": self.solver.validation_cadence,
                "retain_states": self.solver.retain_states,
            },
            "variant": self.variant.value,
            "rate_convention": self.rate_convention.value,
            "monte_carlo": None
            if self.monte_carlo is None
            else {"n_traj": self.monte_carlo.n_traj, "seed": self.monte_carlo.seed},
        }
