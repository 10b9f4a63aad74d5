from __future__ import annotations

import json
import math

import pytest

from polmaser.errors import ConfigError
from polmaser.models import (
    RunConfig,
    apply_overrides,
    load_payload,
    parse_override,
    parse_scalar,
)
from polmaser.physics.master_eq import GeneratorVariant, RateConvention


def test_small_payload_parses(small_payload):
    config = RunConfig.from_payload(small_payload)
    assert config.params.g1 == 0.9 and config.params.r == 0.5
    assert config.atom.chi == pytest.approx(math.sqrt(0.625 * 0.3125))
    assert config.atom.coherence == pytest.approx(0.7 * math.sqrt(0.625 * 0.3125))
    assert config.cutoff.n_max == 3
    assert (config.initial.m, config.initial.n) == (1, 0)
    assert config.variant is GeneratorVariant.EXACT
    assert config.rate_convention is RateConvention.EXPANSION
    assert config.monte_carlo is None
    assert config.expand_series()[0][0] == "main"


def test_default_cutoff_applies_when_absent(small_payload):
    del small_payload["cutoff"]
    assert RunConfig.from_payload(small_payload, default_cutoff=5).cutoff.n_max == 5


def test_hz_units_are_scaled(small_payload):
    small_payload["units"] = "hz"
    small_payload["interaction"] = {
        "g1": 9e8,
        "g2": 5e8,
        "r": 1e9,
        "tau": 1e-10,
        "kappa1": 1e4,
        "omega0": 1e10,
    }
    small_payload["grid"] = {"t_end": 4e-10, "n_samples": 5}
    config = RunConfig.from_payload(small_payload)
    assert config.params.g1 == pytest.approx(0.09)
    assert config.params.r == pytest.approx(0.1)
    assert config.params.tau == pytest.approx(1.0)
    assert config.params.kappa1 == pytest.approx(1e-6)
    assert config.grid.t_end == pytest.approx(4.0)
    assert config.resolved()["units"] == "omega0"


def test_hz_units_need_omega0(small_payload):
    small_payload["units"] = "hz"
    with pytest.raises(ConfigError) as info:
        RunConfig.from_payload(small_payload)
    assert info.value.field == "interaction.omega0"


@pytest.mark.parametrize(
    ("mutate", "field"),
    [
        (lambda p: p.update(units="seconds"), "units"),
        (lambda p: p.update(colour="red"), "colour"),
        (lambda p: p["interaction"].update(g3=0.1), "interaction.g3"),
        (lambda p: p["interaction"].pop("g1"), "interaction.g1"),
        (lambda p: p["interaction"].update(g1="strong"), "interaction.g1"),
        (lambda p: p["interaction"].update(tau=0.0), "interaction.tau"),
        (lambda p: p["interaction"].update(r=-1.0), "interaction"),
        (lambda p: p["atom"].update(p_g=0.5), "atom"),
        (lambda p: p["atom"].update(chi=0.9), "atom"),
        (lambda p: p.update(cutoff=0), "cutoff"),
        (lambda p: p.update(initial_state={"m": 4, "n": 0}), "initial_state"),
        (lambda p: p.update(grid={"t_end": 1.0, "n_samples": 1}), "grid"),
        (lambda p: p.update(solver={"retain_states": "yes"}), "solver.retain_states"),
        (lambda p: p.update(solver={"rel_tol": -1.0}), "solver"),
        (lambda p: p.update(variant="third-order"), "variant"),
        (lambda p: p.update(rate_convention="quartered"), "rate_convention"),
        (lambda p: p.update(monte_carlo={"n_traj": 1}), "monte_carlo.n_traj"),
        (lambda p: p.update(series=[{"label": "a"}, {"label": "a"}]), "series"),
        (lambda p: p.update(series=[{"label": "a/b"}]), "series[0].label"),
    ],
)
def test_invalid_payload_names_field(small_payload, mutate, field):
    mutate(small_payload)
    with pytest.raises(ConfigError) as info:
        RunConfig.from_payload(small_payload)
    assert info.value.field == field


def test_series_expand_into_configs(small_payload):
    small_payload["series"] = [
        {"label": "xi0", "set": {"atom.xi": 0.0}},
        {"label": "xi1", "set": {"atom.xi": 1.0, "interaction.r": 0.1}},
    ]
    expanded = RunConfig.from_payload(small_payload).expand_series()
    assert [label for label, _ in expanded] == ["xi0", "xi1"]
    assert expanded[0][1].atom.xi == 0.0
    assert expanded[1][1].params.r == 0.1
    assert all(not cfg.series for _, cfg in expanded)


def test_series_cannot_redefine_series(small_payload):
    small_payload["series"] = [{"label": "x", "set": {"series": []}}]
    with pytest.raises(ConfigError) as info:
        RunConfig.from_payload(small_payload)
    assert info.value.field == "series[0].set"


def test_overrides_are_applied_to_a_copy(small_payload):
    updated = apply_overrides(small_payload, {"atom.xi": 0.2, "cutoff": 5})
    assert updated["atom"]["xi"] == 0.2 and updated["cutoff"] == 5
    assert small_payload["atom"]["xi"] == 0.7


def test_overrides_create_missing_sections(small_payload):
    updated = apply_overrides(small_payload, {"monte_carlo.n_traj": 10})
    assert RunConfig.from_payload(updated).monte_carlo.n_traj == 10


@pytest.mark.parametrize("key", ["atom.colour", "shape", "grid.t_end.x", "atom."])
def test_unknown_override_keys_are_rejected(small_payload, key):
    with pytest.raises(ConfigError) as info:
        apply_overrides(small_payload, {key: 1})
    assert info.value.field == key


def test_with_overrides_revalidates(small_payload):
    config = RunConfig.from_payload(small_payload)
    assert config.with_overrides({}) is config
    assert config.with_overrides({"variant": "second-order"}).variant is GeneratorVariant.SECOND_ORDER
    with pytest.raises(ConfigError):
        config.with_overrides({"atom.xi": 2.0})


@pytest.mark.parametrize(
    ("raw", "expected"),
    [("0.5", 0.5), ("7", 7), ("true", True), ("null", None), ("max", "max"), ('"exact"', "exact"), ("[1]", "[1]")],
)
def test_parse_scalar(raw, expected):
    assert parse_scalar(raw) == expected


def test_parse_override():
    assert parse_override("atom.chi=max") == ("atom.chi", "max")
    assert parse_override(" grid.t_end = 10 ") == ("grid.t_end", 10)
    with pytest.raises(ConfigError):
        parse_override("atom.xi")


def test_load_payload_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_payload(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_payload(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_payload(listed)


def test_from_file_round_trip(tmp_path, small_payload):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(small_payload), encoding="utf-8")
    config = RunConfig.from_file(path)
    assert config.resolved()["atom"]["xi"] == 0.7
    assert config.resolved()["grid"] == {"t_start": 0.0, "t_end": 4.0, "n_samples": 5}
