from __future__ import annotations

import csv
import json

import pytest

from polmaser import app
from polmaser.app import EXIT_CONFIG, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, run
from polmaser.cli.presets import PRESET_ALIASES, PRESETS, preset_payload
from polmaser.cli.sweep import SweepAxis, sweep_point
from polmaser.cli.validation import CheckResult
from polmaser.errors import ConfigError
from polmaser.models import RunConfig
from polmaser.physics.entanglement import log_negativity
from polmaser.physics.evolve import steady_state_probe
from polmaser.services.output_store import SERIES_HEADER, SWEEP_SUMMARY

WEAK_PAYLOAD = {
    "units": "omega0",
    "interaction": {"g1": 0.09, "g2": 0.05, "r": 0.1, "tau": 1.0, "kappa1": 1e-3, "kappa2": 2e-3},
    "atom": {"p_e1": 0.625, "p_e2": 0.3125, "p_g": 0.0625, "chi": "max", "xi": 0.7},
    "cutoff": 3,
    "initial_state": {"m": 0, "n": 0},
    "grid": {"t_end": 4.0, "n_samples": 5},
}


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    for name in ("POLMASER_OUTPUT_DIR", "POLMASER_WORKERS", "POLMASER_LOG_LEVEL", "POLMASER_MC_CHUNK"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_preset_list(capsys):
    assert run(["preset", "list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in [*PRESETS, *PRESET_ALIASES]:
        assert name in out


def test_presets_are_valid_configs():
    for name in PRESETS:
        config = RunConfig.from_payload(preset_payload(name))
        assert len(config.expand_series()) == 2
        assert config.params.kappa1 == 1e-6
        assert config.atom.p_e1 == 5 / 8 and config.atom.p_g == 1 / 16


def test_presets_keep_figure_names_and_aliases():
    assert list(PRESETS) == ["fig2a", "fig2b", "fig3a", "fig3b"]
    assert PRESET_ALIASES == {"xi-slow": "fig2a", "xi-fast": "fig2b", "rate-g05": "fig3a", "rate-g09": "fig3b"}
    for alias, name in PRESET_ALIASES.items():
        assert preset_payload(alias) == preset_payload(name)
    fig2a = RunConfig.from_payload(preset_payload("fig2a"))
    assert (fig2a.params.g1, fig2a.params.g2, fig2a.params.r) == (0.09, 0.05, 0.1)
    assert [label for label, _ in fig2a.expand_series()] == ["xi=0.7", "xi=0.8"]
    fig3b = RunConfig.from_payload(preset_payload("fig3b"))
    assert fig3b.params.g1 == fig3b.params.g2 == 0.09
    assert [series.params.r for _, series in fig3b.expand_series()] == [0.1, 0.5]


def test_unknown_preset():
    with pytest.raises(ConfigError) as info:
        preset_payload("xi-medium")
    assert info.value.field == "preset"
    assert run(["simulate", "--preset", "xi-medium"]) == EXIT_CONFIG


def test_usage_errors_map_to_config_exit():
    assert run(["simulate"]) == EXIT_CONFIG
    assert run(["launch"]) == EXIT_CONFIG
    assert run(["--version"]) == EXIT_OK


def test_simulate_writes_run(tmp_path):
    config_path = write_config(tmp_path / "weak.json", WEAK_PAYLOAD)
    assert run(["simulate", "--config", str(config_path), "--out", str(tmp_path / "a")]) == EXIT_OK

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["converged"] is True
    assert manifest["config"]["cutoff"] == 3
    assert manifest["cutoff_convergence"]["main"]["n_max_check"] == 7
    assert manifest["series"]["main"]["csv"] == "main.csv"
    assert manifest["monte_carlo"] is None
    with (tmp_path / "a" / "main.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == SERIES_HEADER
    assert len(rows) == 6


def test_simulate_is_reproducible(tmp_path):
    config_path = write_config(tmp_path / "weak.json", WEAK_PAYLOAD)
    for name in ("a", "b"):
        args = ["simulate", "--config", str(config_path), "--out", str(tmp_path / name), "--no-cutoff-check"]
        assert run([*args, "--traj", "8", "--seed", "3"]) == EXIT_OK
    for name in ("main.csv", "main.mc.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 3
    assert manifest["monte_carlo"]["main"]["n_traj"] == 8
    assert manifest["cutoff_convergence"] is None


def test_simulate_flags_truncation_leakage(tmp_path, small_payload):
    config_path = write_config(tmp_path / "small.json", small_payload)
    code = run(["simulate", "--config", str(config_path), "--no-cutoff-check"])
    assert code == EXIT_NOT_CONVERGED
    assert (tmp_path / "runs" / "small" / "main.csv").is_file()
    manifest = json.loads((tmp_path / "runs" / "small" / "manifest.json").read_text(encoding="utf-8"))
    main = manifest["series"]["main"]
    assert main["t_leak"] is not None and 0.0 < main["t_leak"] <= 4.0
    assert main["photon_gain"][0] > 0 and main["photon_gain"][1] > 0
    assert main["converged"] is False


def test_simulate_preset_with_overrides(tmp_path):
    args = ["simulate", "--preset", "fig2a", "--set", "grid.t_end=10", "--set", "grid.n_samples=3", "--cutoff", "2"]
    code = run([*args, "--no-cutoff-check", "--out", str(tmp_path / "fig")])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    assert (tmp_path / "fig" / "xi=0.7.csv").is_file()
    assert (tmp_path / "fig" / "xi=0.8.csv").is_file()


def test_config_errors_exit_with_one(tmp_path, small_payload):
    small_payload["atom"]["xi"] = 1.5
    config_path = write_config(tmp_path / "bad.json", small_payload)
    assert run(["simulate", "--config", str(config_path)]) == EXIT_CONFIG
    assert run(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    good = write_config(tmp_path / "good.json", WEAK_PAYLOAD)
    assert run(["simulate", "--config", str(good), "--set", "atom.colour=1"]) == EXIT_CONFIG
    assert run(["simulate", "--config", str(good), "--workers", "0"]) == EXIT_CONFIG


def test_sweep_over_dephasing(tmp_path):
    config_path = write_config(tmp_path / "weak.json", WEAK_PAYLOAD)
    args = ["sweep", "--config", str(config_path), "--axis", "atom.xi=0,1", "--out", str(tmp_path / "s")]
    assert run(args) == EXIT_OK
    with (tmp_path / "s" / "sweep.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert list(rows[0]) == ["atom.xi", *SWEEP_SUMMARY]
    assert [row["atom.xi"] for row in rows] == ["0", "1"]
    # no atomic coherence, no entanglement
    assert float(rows[0]["peak_log_neg"]) == 0.0
    assert float(rows[1]["peak_log_neg"]) > 0.0


def test_sweep_without_axes_is_one_point(tmp_path):
    config_path = write_config(tmp_path / "weak.json", WEAK_PAYLOAD)
    assert run(["sweep", "--config", str(config_path), "--out", str(tmp_path / "s")]) == EXIT_OK
    lines = (tmp_path / "s" / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(SWEEP_SUMMARY)
    assert len(lines) == 2


def test_sweep_point_reports_stationarity_residual():
    config = RunConfig.from_payload(WEAK_PAYLOAD)
    row = sweep_point(config)
    final, residual = steady_state_probe(
        config.generator_spec(), config.initial.density(config.cutoff), config.grid.t_end, config.solver
    )
    assert row["residual"] == pytest.approx(residual)
    assert row["residual"] > 0
    assert row["final_log_neg"] == pytest.approx(log_negativity(final), abs=1e-12)


def test_sweep_axis_parsing():
    axis = SweepAxis.parse("interaction.g1+interaction.g2=0.05,0.09")
    assert axis.name == "interaction.g1+interaction.g2"
    assert axis.values == (0.05, 0.09)
    for text in ("atom.xi=", "atom.xi", "series=1"):
        with pytest.raises(ConfigError):
            SweepAxis.parse(text)


def test_sweep_rejects_three_axes(tmp_path):
    config_path = write_config(tmp_path / "weak.json", WEAK_PAYLOAD)
    axes = ["--axis", "atom.xi=0", "--axis", "interaction.r=0.1", "--axis", "cutoff=3"]
    assert run(["sweep", "--config", str(config_path), *axes]) == EXIT_CONFIG


def test_validate_failure_exits_with_two(monkeypatch, capsys):
    results = [CheckResult("cptp", True, "fine"), CheckResult("monte-carlo", False, "worst deviation 4.2")]
    monkeypatch.setattr(app, "run_checks", lambda level, **_: results)
    assert run(["validate"]) == EXIT_INVALID
    out = capsys.readouterr().out
    assert "FAILED" in out and "monte-carlo" in out


def test_validate_success_exits_with_zero(monkeypatch):
    monkeypatch.setattr(app, "run_checks", lambda level, **_: [CheckResult("cptp", True, "fine")])
    assert run(["validate", "--level", "full"]) == EXIT_OK
