"""
End-to-end checks of the exact closed-loop dynamics against the reduced theory: the two-level
closed form, the epsilon scaling of transitions under a ramp and of the reduction error, and the
open-path Berry phase.
"""

import numpy as np
import pytest

from src.cli.runner import run_scenario
from src.dynamics.analysis import two_level_closed_form
from src.dynamics.exact import FeedbackSpec, IntegratorOptions, integrate_closed_loop
from src.dynamics.series import default_window, extract_adiabatic_series, population_drift, window_average
from src.spectral.frames import berry_phase_open_path, frame_at

pytestmark = pytest.mark.slow


def test_two_level_follows_closed_form(scenario):
    cfg = scenario("two_level")
    horizon_tau = 2.0
    model = cfg.hamiltonian_model()
    traj = integrate_closed_loop(
        model, cfg.feedback_spec(), cfg.initial_state(), 0.0, horizon_tau / cfg.epsilon, cfg.integrator.options()
    )
    series = extract_adiabatic_series(traj, model)
    taus = series.taus
    tau_f = default_window(cfg.epsilon, float(series.frame_gaps.min()), 20)

    # a12 = -1, b12 = 1/2 for this observable
    p1, phi1, phi2 = two_level_closed_form(0.5, -1.0, 0.5, taus)
    exact_p1 = window_average(series.populations[:, 0], taus, tau_f)
    np.testing.assert_allclose(exact_p1, window_average(p1, taus, tau_f), atol=5e-3)
    exact_phases = window_average(series.phases, taus, tau_f)
    np.testing.assert_allclose(exact_phases[:, 0], window_average(phi1, taus, tau_f), atol=5e-3)
    np.testing.assert_allclose(exact_phases[:, 1], window_average(phi2, taus, tau_f), atol=5e-3)


def test_ramp_transitions_scale_with_epsilon_squared(two_level_model, sigma):
    psi0 = frame_at(two_level_model, 0.0).vectors[:, 0]
    drifts = []
    for epsilon in (1e-2, 5e-3):
        spec = FeedbackSpec.open_loop_polynomial(sigma["z"] / 2, epsilon, [1.0])
        traj = integrate_closed_loop(two_level_model, spec, psi0, 0.0, 1.0 / epsilon)
        drifts.append(population_drift(extract_adiabatic_series(traj, two_level_model)))
    assert drifts[0] < 10 * 1e-2
    assert 3.0 < drifts[0] / drifts[1] < 5.0


def test_ground_state_picks_up_open_path_berry_phase(berry_model, sigma):
    psi0 = frame_at(berry_model, 0.0).vectors[:, 0]
    spec = FeedbackSpec.open_loop_polynomial(sigma["y"] / 2, 1e-3, [1.0])
    traj = integrate_closed_loop(berry_model, spec, psi0, 0.0, 1000.0)
    series = extract_adiabatic_series(traj, berry_model, gauge="raw")
    expected = berry_phase_open_path(berry_model, 0.0, float(traj.r_values[-1]))
    assert abs(expected[0]) > 1e-2
    assert series.phases[-1, 0] == pytest.approx(expected[0], abs=5e-3)
    assert series.populations[-1, 0] == pytest.approx(1.0, abs=1e-3)


def test_reduction_error_shrinks_with_epsilon(scenario, tmp_path):
    deviations = []
    for epsilon in ("1.0e-2", "1.0e-3"):
        cfg = scenario("two_level", f"epsilon={epsilon}")
        report = run_scenario(cfg, str(tmp_path / epsilon))
        deviations.append(report.diagnostics["sup_norm_deviation"])
    assert deviations[1] < deviations[0]
    assert deviations[1] < 5e-3


def test_ramp_drift_stays_below_ten_epsilon(two_level_model, sigma):
    psi0 = frame_at(two_level_model, 0.0).vectors[:, 0]
    drifts = []
    for epsilon in (1e-2, 1e-3, 1e-4):
        spec = FeedbackSpec.open_loop_polynomial(sigma["z"] / 2, epsilon, [1.0])
        traj = integrate_closed_loop(two_level_model, spec, psi0, 0.0, 1.0 / epsilon, IntegratorOptions(sample_stride=1.0))
        drift = population_drift(extract_adiabatic_series(traj, two_level_model))
        assert drift < 10 * epsilon
        drifts.append(drift)
    assert drifts[0] > drifts[1] > drifts[2]
