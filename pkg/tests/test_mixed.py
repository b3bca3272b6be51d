"""
Tests for the mixed-state reduced equations, the hybrid observable and the pseudo-pure mapping.
"""

import numpy as np
import pytest
from scipy.special import expit, logit

from conftest import random_anti_hermitian, random_hermitian
from src.common.errors import DimensionMismatch, NotHermitian
from src.dynamics.mixed import (
    MixedAmplitudes,
    MixedScenario,
    hybrid_observable,
    integrate_mixed,
    mixed_rhs,
    pseudo_pure_amplitudes,
    pseudo_pure_map,
    pure_component,
)
from src.dynamics.reduced import ConstantPayoffs, SimplexState, integrate_reduced
from src.spectral.connection import ConnectionMatrix, payoff_matrices


def _random_scenario(rng, d, zero_diagonal=True) -> MixedScenario:
    connection = random_anti_hermitian(rng, d)
    if zero_diagonal:
        np.fill_diagonal(connection, 0.0)
    return MixedScenario(ConnectionMatrix(connection), random_hermitian(rng, d))


def _random_amplitudes(rng, d):
    c = rng.normal(size=d) + 1j * rng.normal(size=d)
    return c / np.linalg.norm(c)


class TestMixedAmplitudes:

    def test_unit_trace_required(self):
        with pytest.raises(ValueError, match="trace"):
            MixedAmplitudes(np.eye(2))

    def test_hermitian_required(self):
        with pytest.raises(NotHermitian):
            MixedAmplitudes(np.array([[0.5, 0.1], [0.0, 0.5]]))

    def test_pure_state_is_normalized(self):
        state = MixedAmplitudes.pure([1.0, 1j])
        np.testing.assert_allclose(state.cbar, [[0.5, -0.5j], [0.5j, 0.5]])


class TestMixedDynamics:

    def test_maximally_mixed_state_is_stationary(self):
        rng = np.random.default_rng(20)
        for d in (2, 3, 4):
            scenario = _random_scenario(rng, d, zero_diagonal=False)
            path = integrate_mixed(MixedAmplitudes(np.eye(d) / d), scenario, 2.0, step=0.01)
            np.testing.assert_allclose(path.cbar[-1], np.eye(d) / d, atol=1e-9)

    def test_identity_stays_put_for_long_times(self, scenario):
        cfg = scenario("decoherence3")
        path = integrate_mixed(MixedAmplitudes(np.eye(3) / 3), cfg.mixed_scenario(), 50.0, step=0.01)
        np.testing.assert_allclose(path.cbar, np.broadcast_to(np.eye(3) / 3, path.cbar.shape), atol=1e-9)

    def test_magnitudes_ignore_diagonal_connection_gauge(self):
        rng = np.random.default_rng(26)
        scenario = _random_scenario(rng, 3)
        shifted = MixedScenario(
            ConnectionMatrix(scenario.connection.entries + 1j * np.diag(rng.normal(size=3))), scenario.a_ad
        )
        initial = pseudo_pure_amplitudes(0.6, _random_amplitudes(rng, 3))
        path = integrate_mixed(initial, scenario, 5.0, step=0.01)
        regauged = integrate_mixed(initial, shifted, 5.0, step=0.01)
        assert np.max(np.abs(path.r_bar)) > 1e-2
        np.testing.assert_allclose(np.abs(regauged.cbar), np.abs(path.cbar), atol=1e-8)
        np.testing.assert_allclose(regauged.r_bar, path.r_bar, atol=1e-8)

    def test_hermiticity_correction_is_small(self, scenario):
        cfg = scenario("decoherence3")
        path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 20.0, step=0.01)
        assert np.max(path.asymmetry) < 1e-9

    def test_trace_is_conserved(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            d = int(rng.integers(2, 5))
            scenario = _random_scenario(rng, d, zero_diagonal=False)
            initial = pseudo_pure_amplitudes(0.7, _random_amplitudes(rng, d))
            path = integrate_mixed(initial, scenario, 2.0, step=0.01)
            assert np.max(path.trace_drift) < 1e-6

    def test_single_connection_conserves_blocks(self, scenario):
        cfg = scenario("partial_connection")
        path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 40.0, step=0.01)
        np.testing.assert_allclose(path.cbar[:, 0, 0].real, 0.2, atol=1e-8)
        np.testing.assert_allclose(path.cbar[:, 1, 1].real + path.cbar[:, 2, 2].real, 0.8, atol=1e-8)
        assert abs(path.cbar[-1, 1, 2]) < 1e-3

    def test_unconnected_coherence_is_driven_through_the_connected_pair(self, scenario):
        # c13 moves at rate -c12 c23, so the direction follows the phase of c23
        cfg = scenario("partial_connection")
        changes = []
        for theta in np.linspace(0.0, 2 * np.pi, 8, endpoint=False):
            cbar = np.array(cfg.initial_mixed().cbar)
            cbar[1, 2] = 0.1 * np.exp(1j * theta)
            cbar[2, 1] = np.conj(cbar[1, 2])
            path = integrate_mixed(MixedAmplitudes(cbar), cfg.mixed_scenario(), 0.5, step=0.01)
            changes.append(path.cbar[-1, 0, 2].real - path.cbar[0, 0, 2].real)
        assert max(changes) > 1e-3
        assert min(changes) < -1e-3

    def test_full_connection_decoheres(self, scenario):
        cfg = scenario("decoherence3")
        path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 100.0, step=0.01)
        final = path.cbar[-1]
        assert np.max(np.abs(final - np.diag(np.diag(final)))) < 1e-3
        assert np.max(path.trace_drift) < 1e-6

    def test_pure_state_follows_reduced_populations(self, scenario):
        cfg = scenario("hybrid_cooling")
        mixed = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 10.0, step=0.01)
        reduced = integrate_reduced(cfg.initial_simplex(), cfg.payoff_source(), 10.0, step=0.01)
        np.testing.assert_allclose(mixed.populations, reduced.p, atol=1e-8)

    def test_hybrid_feedback_cools_to_ground_level(self, scenario):
        cfg = scenario("hybrid_cooling")
        path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 30.0, step=0.01)
        assert path.populations[-1, 0] > 1.0 - 1e-3
        assert np.all(np.diff(path.populations[:, 0]) >= -1e-12)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(22)
        with pytest.raises(DimensionMismatch):
            mixed_rhs(MixedAmplitudes(np.eye(3) / 3), _random_scenario(rng, 2))

    def test_to_frame(self, scenario):
        cfg = scenario("hybrid_cooling")
        df = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 0.1, step=0.05).to_frame()
        assert list(df.columns) == [
            "tau", "re_c_11", "im_c_11", "re_c_12", "im_c_12",
            "re_c_21", "im_c_21", "re_c_22", "im_c_22", "r_bar", "trace",
        ]


class TestHybridObservable:

    def test_two_level_values(self):
        connection = ConnectionMatrix(np.array([[0, 0.5], [-0.5, 0]], dtype=complex))
        a_ad = hybrid_observable([0.0, 1.0], [0.3, -0.2], connection)
        np.testing.assert_allclose(a_ad, [[0.3, -0.5], [-0.5, -0.2]])
        payoffs = payoff_matrices(connection, a_ad)
        assert payoffs.a[0, 1] == pytest.approx(0.5)

    def test_phase_coupling_vanishes(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            d = int(rng.integers(2, 6))
            connection = ConnectionMatrix(random_anti_hermitian(rng, d))
            energies = np.sort(rng.normal(size=d))
            a_ad = hybrid_observable(energies, rng.normal(size=d), connection)
            np.testing.assert_allclose(payoff_matrices(connection, a_ad).b, 0.0, atol=1e-12)

    def test_energies_must_match_dimension(self):
        connection = ConnectionMatrix(np.array([[0, 0.5], [-0.5, 0]], dtype=complex))
        with pytest.raises(DimensionMismatch):
            hybrid_observable([0.0, 1.0, 2.0], [0.0, 0.0], connection)


class TestPseudoPure:

    def test_velocity_matches_rescaled_observable(self):
        rng = np.random.default_rng(24)
        for _ in range(50):
            d = int(rng.integers(2, 5))
            eta = float(rng.uniform(0.1, 1.0))
            scenario = _random_scenario(rng, d)
            amplitudes = _random_amplitudes(rng, d)
            mixed_velocity, _ = mixed_rhs(pseudo_pure_amplitudes(eta, amplitudes), scenario)
            rescaled = scenario.with_observable(pseudo_pure_map(eta, scenario.a_ad))
            pure_velocity, _ = mixed_rhs(MixedAmplitudes.pure(amplitudes), rescaled)
            np.testing.assert_allclose(mixed_velocity, pure_velocity, atol=1e-12)

    def test_pure_component_follows_eta_scaled_observable(self):
        rng = np.random.default_rng(25)
        eta = 0.4
        scenario = _random_scenario(rng, 3)
        amplitudes = _random_amplitudes(rng, 3)
        mixed = integrate_mixed(pseudo_pure_amplitudes(eta, amplitudes), scenario, 5.0, step=0.01)
        pure = integrate_mixed(
            MixedAmplitudes.pure(amplitudes), scenario.with_observable(eta * scenario.a_ad), 5.0, step=0.01
        )
        np.testing.assert_allclose(pure_component(mixed.cbar[-1], eta), pure.cbar[-1], atol=1e-10)

    def test_pure_component_populations_follow_scaled_payoff(self, scenario):
        # pure payoff a12 = 1 is rescaled to eta a12 = 1/2
        cfg = scenario("pseudo_pure")
        path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 10.0, step=0.01)
        p1 = np.array([pure_component(cbar, 0.5)[0, 0].real for cbar in path.cbar])
        np.testing.assert_allclose(p1, expit(logit(0.3) + 0.5 * path.taus), atol=1e-6)

    def test_reduced_with_scaled_payoffs(self, scenario):
        cfg = scenario("pseudo_pure")
        mixed = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), 10.0, step=0.01)
        source = cfg.payoff_source()
        scaled = ConstantPayoffs(a=0.5 * source.a, b=0.5 * source.b, adiag=0.5 * source.adiag)
        reduced = integrate_reduced(SimplexState(p=np.array([0.3, 0.7])), scaled, 10.0, step=0.01)
        pure_populations = np.array([np.diag(pure_component(cbar, 0.5)).real for cbar in mixed.cbar])
        np.testing.assert_allclose(pure_populations, reduced.p, atol=1e-6)

    def test_pure_component_inverts_mapping(self):
        amplitudes = np.array([0.6, 0.8j])
        cbar = pseudo_pure_amplitudes(0.3, amplitudes).cbar
        np.testing.assert_allclose(pure_component(cbar, 0.3), np.outer(amplitudes, amplitudes.conj()), atol=1e-14)

    @pytest.mark.parametrize("eta", [0.0, -0.2, 1.5])
    def test_eta_range(self, eta):
        with pytest.raises(ValueError):
            pseudo_pure_map(eta, np.eye(2))
        with pytest.raises(ValueError):
            pseudo_pure_amplitudes(eta, [1.0, 0.0])
