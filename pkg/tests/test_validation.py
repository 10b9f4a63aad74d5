from __future__ import annotations

import numpy as np
import pytest

from polmaser.cli import validation
from polmaser.cli.validation import (
    CheckResult,
    FigureWindow,
    Level,
    PeakReport,
    check_coherence_gate,
    check_coherence_ordering,
    check_coupling_ordering,
    check_cptp,
    check_excitation_conservation,
    check_interleaving,
    check_loss_decay,
    check_mode_swap,
    check_propagator_blocks,
    check_rate_ordering,
    check_transient_peak,
    checks_for,
    preset_window,
    run_checks,
)
from polmaser.errors import InvariantViolation
from polmaser.physics.atom_field import AtomPreparation, InteractionParams
from polmaser.physics.evolve import SolverConfig, TimeGrid, integrate
from polmaser.physics.hilbert import FockCutoff, fock_state
from polmaser.physics.master_eq import GeneratorSpec, GeneratorVariant

WINDOW = FigureWindow(20, 1000.0, 101)
FIGURE_CHECKS = ["transient-peak", "coherence-ordering", "rate-ordering", "coupling-ordering", "interleaving"]


def stub_peaks(monkeypatch, *, scale=100.0, at_end=False, leaking=False, by_g1_only=False):
    """Replaces the solver runs behind the figure checks with a closed-form peak."""

    def fake(g1, g2, r, xi, window):
        peak = scale * g1 * (g1 if by_g1_only else g2) * r * xi
        return PeakReport(
            peak=peak,
            t_peak=window.t_end if at_end else window.t_end / 2,
            t_end=window.t_end,
            leakage=1e-3 if leaking else 1e-9,
            converged=not leaking,
            gain=(4.5e-4, 6e-5),
        )

    monkeypatch.setattr(validation, "figure_peak", fake)


def test_propagator_blocks_check():
    result = check_propagator_blocks(6)
    assert result.passed, result.detail


def test_excitation_conservation_check():
    result = check_excitation_conservation(4)
    assert result.passed, result.detail


def test_cptp_check():
    result = check_cptp(3, n_max=2)
    assert result.passed, result.detail


def test_loss_decay_check():
    result = check_loss_decay(0.1)
    assert result.passed, result.detail


@pytest.mark.parametrize("variant", list(GeneratorVariant))
def test_coherence_gate_holds_for_each_generator(variant):
    result = check_coherence_gate(3, 200.0, 5, variants=(variant,))
    assert result.passed, result.detail
    assert variant.value in result.detail


def test_mode_swap_check():
    result = check_mode_swap(3, 200.0, 5)
    assert result.passed, result.detail


def test_full_level_adds_figure_checks():
    fast = [name for name, _ in checks_for(Level.FAST)]
    full = [name for name, _ in checks_for(Level.FULL)]
    assert full[: len(fast)] == fast
    assert full[len(fast) :] == FIGURE_CHECKS
    assert "monte-carlo" in fast and "generator-order" in fast


def test_preset_windows_follow_presets():
    window = preset_window("fig2a")
    assert window == FigureWindow(20, 1000.0, 101)
    assert window.refined().n_max == 24
    assert preset_window("rate-g09") == FigureWindow(20, 200.0, 101)


def test_figure_checks_pass_on_ordered_contained_peaks(monkeypatch):
    stub_peaks(monkeypatch)
    for check in (
        check_transient_peak,
        check_coherence_ordering,
        check_rate_ordering,
        check_coupling_ordering,
        check_interleaving,
    ):
        result = check(WINDOW)
        assert result.passed, f"{result.name}: {result.detail}"


def test_transient_peak_reports_photon_gain(monkeypatch):
    stub_peaks(monkeypatch)
    result = check_transient_peak(WINDOW)
    assert "photon gain" in result.detail
    assert "xi=0.7" in result.detail and "xi=0.8" in result.detail


def test_transient_peak_needs_floor_and_interior_maximum(monkeypatch):
    stub_peaks(monkeypatch, scale=1.0)
    assert not check_transient_peak(WINDOW).passed
    stub_peaks(monkeypatch, at_end=True)
    assert not check_transient_peak(WINDOW).passed


def test_ordering_checks_fail_when_runs_leak(monkeypatch):
    stub_peaks(monkeypatch, leaking=True)
    for check in (check_coherence_ordering, check_rate_ordering, check_coupling_ordering, check_interleaving):
        result = check(WINDOW)
        assert not result.passed
        assert "leaking" in result.detail
    assert not check_transient_peak(WINDOW).passed


def test_interleaving_needs_strict_order(monkeypatch):
    stub_peaks(monkeypatch, by_g1_only=True)
    result = check_interleaving(WINDOW)
    assert not result.passed
    assert "leaking" not in result.detail


def test_lossless_runs_rescale_with_injection_rate():
    cutoff = FockCutoff(3)
    atom = AtomPreparation.with_max_coherence(5 / 8, 5 / 16, 1 / 16, xi=0.7)
    series = {}
    for r, t_end in ((0.5, 4.0), (0.1, 20.0)):
        params = InteractionParams(g1=0.9, g2=0.5, r=r, tau=1.0)
        spec = GeneratorSpec(GeneratorVariant.EXACT, params, atom, cutoff)
        trajectory = integrate(spec, fock_state(1, 0, cutoff), TimeGrid(t_end=t_end, n_samples=9), SolverConfig())
        series[r] = trajectory.series("log_neg")
    assert series[0.5].max() > 0
    np.testing.assert_allclose(series[0.5], series[0.1], atol=1e-5)


def test_run_checks_turns_errors_into_failures(monkeypatch):
    def broken() -> CheckResult:
        raise InvariantViolation("step size underflow", code="solver")

    def fine() -> CheckResult:
        return CheckResult("fine", True, "ok")

    monkeypatch.setattr(validation, "checks_for", lambda level, **_: [("broken", broken), ("fine", fine)])
    results = run_checks(Level.FAST)
    assert [(r.name, r.passed) for r in results] == [("broken", False), ("fine", True)]
    assert "underflow" in results[0].detail
    assert all(r.seconds >= 0 for r in results)


@pytest.mark.slow
def test_fast_suite_deterministic_checks_pass():
    for name, check in checks_for(Level.FAST):
        if name == "monte-carlo":
            continue
        result = check()
        assert result.passed, f"{name}: {result.detail}"
