from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from polmaser.physics.atom_field import AtomPreparation, InteractionParams
from polmaser.physics.evolve import SolverConfig, TimeGrid, integrate
from polmaser.physics.hilbert import FockCutoff, fock_state
from polmaser.physics.master_eq import GeneratorSpec, GeneratorVariant
from polmaser.services.output_store import SERIES_HEADER, SWEEP_SUMMARY, RunOutputStore, format_value, sha256_of


@pytest.fixture
def trajectory():
    cutoff = FockCutoff(2)
    params = InteractionParams(g1=0.0, g2=0.0, r=0.0, tau=1.0, kappa1=0.1)
    spec = GeneratorSpec(GeneratorVariant.EXACT, params, AtomPreparation.ground(), cutoff)
    return integrate(spec, fock_state(1, 0, cutoff), TimeGrid(t_end=1.0, n_samples=3), SolverConfig(retain_states=True))


@pytest.mark.parametrize(
    ("value", "text"),
    [(True, "true"), (False, "false"), (3, "3"), (np.int64(4), "4"), (0.1, "0.1"), (1 / 3, "0.333333333333333")],
)
def test_format_value(value, text):
    assert format_value(value) == text


def test_series_csv_layout(tmp_path, trajectory):
    store = RunOutputStore(tmp_path / "out")
    path = store.save_series("main", trajectory)
    assert path.name == "main.csv"
    with path.open(encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == SERIES_HEADER
    assert len(rows) == 4
    assert float(rows[1][0]) == 0.0 and float(rows[1][2]) == 1.0
    assert "\r" not in path.read_text(encoding="utf-8")


def test_states_round_trip(tmp_path, trajectory):
    store = RunOutputStore(tmp_path)
    path = store.save_states("main", trajectory)
    assert path.name == "main.states.npy.zst"
    assert_array_equal(RunOutputStore.load_states(path), np.stack(trajectory.states))


def test_states_skipped_when_not_retained(tmp_path, trajectory):
    trajectory.states = None
    assert RunOutputStore(tmp_path).save_states("main", trajectory) is None


def test_manifest_is_stable(tmp_path):
    store = RunOutputStore(tmp_path)
    store.save_manifest({"b": 1, "a": {"z": 0.5, "y": None}})
    first = sha256_of(store.manifest_path)
    store.save_manifest({"a": {"y": None, "z": 0.5}, "b": 1})
    assert sha256_of(store.manifest_path) == first
    assert store.manifest_path.read_text(encoding="utf-8").endswith("}\n")
    assert store.load_manifest() == {"a": {"y": None, "z": 0.5}, "b": 1}


def test_unreadable_manifest_is_ignored(tmp_path, caplog):
    store = RunOutputStore(tmp_path)
    assert store.load_manifest() is None
    store.manifest_path.write_text("{oops", encoding="utf-8")
    assert store.load_manifest() is None
    assert "unreadable manifest" in caplog.text
    store.manifest_path.write_text(json.dumps([1, 2]), encoding="utf-8")
    assert store.load_manifest() is None


def test_sweep_csv(tmp_path):
    store = RunOutputStore(tmp_path)
    rows = [
        {"atom.xi": 0.0, "peak_log_neg": 0.0, "t_peak": 0.0, "residual": 1e-3, "final_log_neg": 0.0, "converged": True},
        {"atom.xi": 1.0, "peak_log_neg": 0.2, "t_peak": 5.0, "residual": 1e-3, "final_log_neg": 0.1, "converged": False},
    ]
    path = store.save_sweep(["atom.xi"], rows)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(["atom.xi", *SWEEP_SUMMARY])
    assert lines[2] == "1,0.2,5,0.001,0.1,false"
