"""
Tests for scenario parsing, defaults, overrides, rendering and the model builders.
"""

import numpy as np
import pytest

from conftest import SCENARIO_DIR, SIGMA_X, SIGMA_Z
from src.common.errors import DimensionMismatch, NotHermitian, ParseError, SchemaError
from src.dynamics.reduced import FrameDependentPayoffs
from src.scenarios.loader import load_scenario, parse_scenario, render_scenario, scenario_hash
from src.scenarios.models import linear_model

MINIMAL = """\
name: minimal
dim: 2
epsilon: 1.0e-3
model:
  abstract_frame:
    connection: [[0, 0.5], [-0.5, 0]]
feedback:
  observable: [[0, -1], [-1, 0]]
initial:
  populations: [0.3, 0.7]
run:
  mode: reduced
  horizon_tau: 1.0
"""

SHIPPED = sorted(path.stem for path in SCENARIO_DIR.glob("*.scn"))


class TestLinearModel:

    def test_matrix(self):
        model = linear_model(SIGMA_X / 2, SIGMA_Z / 2)
        np.testing.assert_allclose(model.matrix(2.0), SIGMA_X / 2 + SIGMA_Z)
        np.testing.assert_allclose(model.slope(-4.0), SIGMA_Z / 2)
        assert model.dim == 2

    def test_shapes_must_match(self):
        with pytest.raises(DimensionMismatch):
            linear_model(np.eye(2), np.eye(3))

    def test_slope_must_be_hermitian(self):
        with pytest.raises(NotHermitian):
            linear_model(np.eye(2), np.array([[0, 1], [0, 0]]))


class TestParseScenario:

    def test_defaults(self):
        cfg = parse_scenario(MINIMAL)
        assert cfg.integrator.rtol == 1e-9
        assert cfg.integrator.atol == 1e-12
        assert cfg.integrator.step == 1e-3
        assert cfg.integrator.sample_stride == 0.25
        assert cfg.gap_tol == 1e-8
        assert cfg.initial.r0 == 0.0
        assert cfg.feedback.form == "linear"
        assert cfg.run.payoffs == "constant"
        assert not cfg.is_linear

    def test_complex_literals(self, scenario):
        cfg = scenario("two_level")
        np.testing.assert_allclose(cfg.lab_observable(), [[1, -1j], [1j, -1]])

    def test_malformed_complex_literal_names_field_and_line(self):
        text = MINIMAL.replace("observable: [[0, -1], [-1, 0]]", "observable: [[0, [1, 2, 3]], [-1, 0]]")
        with pytest.raises(ParseError) as info:
            parse_scenario(text)
        assert info.value.field == "feedback.observable"
        assert info.value.line == 8
        assert "line 8" in str(info.value)

    def test_exponents_without_dot(self):
        text = MINIMAL.replace("epsilon: 1.0e-3", "epsilon: 1e-3").replace(
            "observable: [[0, -1], [-1, 0]]", "observable: [[0, 1e-3], [1e-3, 0]]"
        )
        cfg = parse_scenario(text)
        assert cfg.epsilon == 1e-3
        np.testing.assert_allclose(cfg.lab_observable(), [[0, 1e-3], [1e-3, 0]])

    def test_word_in_matrix_is_rejected(self):
        text = MINIMAL.replace("observable: [[0, -1], [-1, 0]]", "observable: [[0, one], [-1, 0]]")
        with pytest.raises(ParseError) as info:
            parse_scenario(text)
        assert info.value.field == "feedback.observable"

    def test_non_hermitian_observable(self):
        text = MINIMAL.replace("observable: [[0, -1], [-1, 0]]", "observable: [[0, 1], [0, 0]]")
        with pytest.raises(ValueError, match="observable not Hermitian"):
            parse_scenario(text)

    def test_connection_must_be_anti_hermitian(self):
        text = MINIMAL.replace("connection: [[0, 0.5], [-0.5, 0]]", "connection: [[0, 0.5], [0.5, 0]]")
        with pytest.raises(ValueError, match="anti-Hermitian"):
            parse_scenario(text)

    def test_missing_field(self):
        with pytest.raises(SchemaError) as info:
            parse_scenario(MINIMAL.replace("epsilon: 1.0e-3\n", ""))
        assert info.value.field == "epsilon"

    def test_invalid_yaml(self):
        with pytest.raises(ParseError) as info:
            parse_scenario("name: broken\ndim: [2\n")
        assert info.value.line is not None

    def test_not_a_mapping(self):
        with pytest.raises(ParseError):
            parse_scenario("- just\n- a list\n")

    @pytest.mark.parametrize(
        "old, new, field",
        [
            ("mode: reduced", "mode: exact", "model"),
            ("horizon_tau: 1.0", "horizon_t: 1.0", "run.horizon_tau"),
            ("dim: 2", "dim: 1", "dim"),
            ("epsilon: 1.0e-3", "epsilon: -1.0", "epsilon"),
        ],
    )
    def test_schema_checks(self, old, new, field):
        with pytest.raises(SchemaError) as info:
            parse_scenario(MINIMAL.replace(old, new))
        assert info.value.field == field

    def test_pseudo_pure_only_in_mixed_mode(self):
        text = MINIMAL.replace("populations: [0.3, 0.7]", "populations: [0.3, 0.7]\n  eta: 0.5")
        with pytest.raises(SchemaError):
            parse_scenario(text)
        cfg = parse_scenario(text.replace("mode: reduced", "mode: mixed"))
        np.testing.assert_allclose(np.trace(cfg.initial_mixed().cbar), 1.0)

    def test_hybrid_needs_energies(self):
        with pytest.raises(SchemaError):
            parse_scenario(MINIMAL.replace("observable: [[0, -1], [-1, 0]]", "observable: hybrid"))

    def test_unknown_observable_keyword(self):
        with pytest.raises(ParseError):
            parse_scenario(MINIMAL.replace("observable: [[0, -1], [-1, 0]]", "observable: sigma_x"))


class TestLoadScenario:

    def test_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="was not found"):
            load_scenario(str(tmp_path / "missing.scn"))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.scn"
        path.write_text("   \n")
        with pytest.raises(ParseError, match="empty"):
            load_scenario(str(path))

    def test_overrides(self, scenario):
        cfg = scenario("rps3", "run.horizon_tau=5", "initial.populations=[0.2, 0.3, 0.5]", "epsilon=1e-2")
        assert cfg.run.horizon_tau == 5.0
        assert cfg.epsilon == 1e-2
        np.testing.assert_allclose(cfg.initial.populations, [0.2, 0.3, 0.5])

    def test_override_creates_section(self, scenario):
        cfg = scenario("extinction3", "integrator.step=0.01")
        assert cfg.integrator.step == 0.01

    def test_malformed_override(self, scenario):
        with pytest.raises(ParseError):
            scenario("rps3", "run.horizon_tau")

    @pytest.mark.parametrize("name", SHIPPED)
    def test_render_round_trip(self, scenario, name):
        cfg = scenario(name)
        again = parse_scenario(render_scenario(cfg))
        assert again == cfg
        assert scenario_hash(again) == scenario_hash(cfg)

    def test_hash_changes_with_content(self, scenario):
        assert scenario_hash(scenario("rps3")) != scenario_hash(scenario("rps3", "epsilon=2.0e-3"))


class TestBuilders:

    def test_initial_state_is_normalized(self, scenario):
        cfg = scenario("two_level")
        assert np.linalg.norm(cfg.initial_state()) == pytest.approx(1.0)
        np.testing.assert_allclose(np.abs(cfg.initial_amplitudes()) ** 2, [0.5, 0.5])

    def test_hybrid_observable_from_energies(self, scenario):
        cfg = scenario("hybrid_cooling")
        np.testing.assert_allclose(cfg.adiabatic_observable(), [[0, -0.5], [-0.5, 0]])
        assert cfg.payoff_source().a[0, 1] == pytest.approx(0.5)

    def test_abstract_frame_has_no_hamiltonian(self, scenario):
        with pytest.raises(SchemaError):
            scenario("extinction3").hamiltonian_model()

    def test_frame_dependent_source(self, scenario):
        cfg = scenario("rps3", "run.payoffs=frame_dependent")
        assert isinstance(cfg.payoff_source(), FrameDependentPayoffs)
