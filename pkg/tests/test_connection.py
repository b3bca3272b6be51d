"""
Tests for the Berry connection, the adiabatic observable and the payoff matrices a and b.
"""

import numpy as np
import pytest

from conftest import random_anti_hermitian, random_gapped_model, random_hermitian
from src.common.errors import InvalidStep
from src.spectral.connection import (
    ConnectionMatrix,
    PayoffMatrices,
    adiabatic_matrix,
    connection_analytic,
    connection_fd,
    frame_payoffs,
    gauge_invariance_residual,
    payoff_matrices,
)
from src.scenarios.models import linear_model
from src.spectral.frames import frame_at


class TestTwoLevelValues:
    """H = sigma_x/2 + R sigma_z/2 at R = 0 with A = sigma_z + sigma_y."""

    def test_connection(self, two_level_model):
        frame = frame_at(two_level_model, 0.0)
        connection = connection_analytic(frame, two_level_model.slope(0.0))
        np.testing.assert_allclose(connection.entries, [[0, 0.5], [-0.5, 0]], atol=1e-14)

    def test_adiabatic_observable(self, two_level_model, sigma):
        frame = frame_at(two_level_model, 0.0)
        a_ad = adiabatic_matrix(sigma["z"] + sigma["y"], frame)
        np.testing.assert_allclose(a_ad, [[0, 1 - 1j], [1 + 1j, 0]], atol=1e-14)

    def test_hamiltonian_is_diagonal_in_its_own_frame(self, two_level_model):
        frame = frame_at(two_level_model, 0.7)
        np.testing.assert_allclose(adiabatic_matrix(two_level_model.matrix(0.7), frame), np.diag(frame.energies), atol=1e-14)

    def test_payoffs(self, two_level_model, sigma):
        _, _, _, payoffs = frame_payoffs(two_level_model, sigma["z"] + sigma["y"], 0.0)
        assert payoffs.a[0, 1] == pytest.approx(-1.0, abs=1e-14)
        assert payoffs.a[1, 0] == pytest.approx(1.0, abs=1e-14)
        assert payoffs.b[0, 1] == pytest.approx(0.5, abs=1e-14)
        np.testing.assert_array_equal(np.diag(payoffs.a), 0.0)
        np.testing.assert_array_equal(np.diag(payoffs.b), 0.0)

    def test_sigma_y_only_drives_phases(self, two_level_model, sigma):
        _, _, _, payoffs = frame_payoffs(two_level_model, sigma["y"], 0.0)
        np.testing.assert_allclose(payoffs.a, 0.0, atol=1e-14)
        assert payoffs.b[0, 1] == pytest.approx(0.5, abs=1e-14)


class TestRockScissorsPaper:

    def test_three_level_payoffs(self, scenario):
        cfg = scenario("rps3")
        _, _, _, payoffs = frame_payoffs(cfg.hamiltonian_model(), cfg.lab_observable(), 0.0)
        np.testing.assert_allclose(
            payoffs.a, [[0, 2, -1], [-2, 0, 1], [1, -1, 0]], atol=1e-12
        )
        np.testing.assert_allclose(payoffs.b, 0.0, atol=1e-12)


class TestFiniteDifference:

    def test_matches_analytic(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            model = random_gapped_model(rng, 3)
            r_value = rng.uniform(-0.5, 0.5)
            analytic = connection_analytic(frame_at(model, r_value), model.slope(r_value))
            numeric = connection_fd(model, r_value, step=1e-4)
            np.testing.assert_allclose(numeric.entries, analytic.entries, atol=1e-6)
            assert numeric.hermitian_residual < 1e-6

    def test_constant_model_has_no_connection(self):
        rng = np.random.default_rng(8)
        model = linear_model(np.diag([0.0, 1.0, 2.5]) + random_hermitian(rng, 3, 0.1), np.zeros((3, 3)))
        np.testing.assert_allclose(connection_fd(model, 0.3).entries, 0.0, atol=1e-14)

    @pytest.mark.parametrize("step", [0.0, -1e-3, np.inf, np.nan])
    def test_invalid_step(self, two_level_model, step):
        with pytest.raises(InvalidStep):
            connection_fd(two_level_model, 0.0, step=step)


class TestValidation:

    def test_connection_must_be_anti_hermitian(self):
        with pytest.raises(ValueError, match="anti-Hermitian"):
            ConnectionMatrix(np.array([[0, 1], [1, 0]], dtype=complex))

    def test_payoff_a_must_be_antisymmetric(self):
        with pytest.raises(ValueError):
            PayoffMatrices(a=np.array([[0, 1], [1, 0]]), b=np.zeros((2, 2)))

    def test_payoff_b_must_be_symmetric(self):
        with pytest.raises(ValueError):
            PayoffMatrices(a=np.zeros((2, 2)), b=np.array([[0, 1], [2, 0]]))

    def test_observable_dimension(self, two_level_model):
        frame = frame_at(two_level_model, 0.0)
        with pytest.raises(ValueError):
            adiabatic_matrix(np.eye(3), frame)

    def test_connection_is_read_only(self):
        connection = ConnectionMatrix(np.array([[0, 1], [-1, 0]], dtype=complex))
        assert connection[0, 1] == 1
        with pytest.raises(ValueError):
            connection.entries[0, 1] = 2


class TestProperties:
    """100 random instances each."""

    def test_analytic_connection_is_anti_hermitian(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            d = int(rng.integers(2, 6))
            model = random_gapped_model(rng, d)
            r_value = rng.uniform(-1.0, 1.0)
            connection = connection_analytic(frame_at(model, r_value), model.slope(r_value))
            entries = connection.entries
            assert np.max(np.abs(entries + entries.conj().T)) < 1e-9
            np.testing.assert_array_equal(np.diag(entries), 0.0)

    def test_payoff_symmetries_are_exact(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            d = int(rng.integers(2, 6))
            connection = ConnectionMatrix(random_anti_hermitian(rng, d))
            payoffs = payoff_matrices(connection, random_hermitian(rng, d))
            np.testing.assert_array_equal(payoffs.a, -payoffs.a.T)
            np.testing.assert_array_equal(payoffs.b, payoffs.b.T)

    def test_payoffs_are_gauge_invariant(self):
        rng = np.random.default_rng(102)
        for _ in range(100):
            d = int(rng.integers(2, 5))
            model = random_gapped_model(rng, d)
            frame = frame_at(model, 0.0)
            residual = gauge_invariance_residual(frame, model.slope(0.0), random_hermitian(rng, d), rng)
            assert residual < 1e-10
