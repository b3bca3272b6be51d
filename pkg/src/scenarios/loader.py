"""
This module handles loading scenario documents from disk or text and rendering them back.
Scenario documents are YAML mappings; complex numbers are [re, im] pairs and matrices row-major
nested lists. Errors name the offending field and, where known, its line.
"""

import hashlib
import logging
import os
from typing import Iterable, Optional

import numpy as np
import yaml

from src.common.config import ATOL, GAP_TOL, HERMITIAN_TOL, MATRIX_TOL, MIN_STEP, REDUCED_STEP, RTOL, SAMPLE_STRIDE
from src.common.errors import ParseError, SchemaError
from src.common.numerics import anti_hermiticity_residual, require_hermitian
from src.dynamics.exact import FeedbackForm
from src.scenarios.models import (
    HYBRID,
    PAYOFF_MODES,
    RUN_MODES,
    AbstractFrameSpec,
    FeedbackConfig,
    InitialConfig,
    IntegratorConfig,
    LinearModelSpec,
    RunConfig,
    ScenarioConfig,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"name", "description", "dim", "epsilon", "gap_tol", "model", "feedback", "initial", "run", "integrator"}
_MISSING = object()


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line of the key, from the YAML node tree."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                lines[path] = key_node.start_mark.line + 1
                walk(value_node, path)

    walk(root, "")
    return lines


class _DocumentReader:
    """Typed access to a parsed document by dotted path."""

    def __init__(self, document: dict, lines: Optional[dict] = None):
        self.document = document
        self.lines = lines or {}

    def parse_error(self, message: str, path: str) -> ParseError:
        return ParseError(message, field=path, line=self.lines.get(path))

    def get(self, path: str, default=_MISSING):
        node = self.document
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is _MISSING:
                    raise SchemaError("missing required field", field=path)
                return default
            node = node[part]
        if node is None and default is not _MISSING:
            return default
        return node

    def has(self, path: str) -> bool:
        return self.get(path, None) is not None

    def section(self, path: str, required: bool = True) -> dict:
        value = self.get(path) if required else self.get(path, {})
        if not isinstance(value, dict):
            raise self.parse_error("expected a mapping", path)
        return value

    def number(self, path: str, default=_MISSING) -> Optional[float]:
        value = self.get(path, default)
        if value is None or value is default:
            return value
        return self._to_float(value, path)

    def _to_float(self, value, path: str) -> float:
        if isinstance(value, bool):
            raise self.parse_error(f"expected a number, got {value!r}", path)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise self.parse_error(f"expected a number, got {value!r}", path)

    def integer(self, path: str) -> int:
        value = self.get(path)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.parse_error(f"expected an integer, got {value!r}", path)
        return value

    def string(self, path: str, default=_MISSING) -> str:
        value = self.get(path, default)
        if not isinstance(value, str):
            raise self.parse_error(f"expected a string, got {value!r}", path)
        return value

    def choice(self, path: str, options, default=_MISSING) -> str:
        value = self.string(path, default)
        if value not in options:
            raise self.parse_error(f"expected one of {', '.join(options)}, got {value!r}", path)
        return value

    def complex_literal(self, value, path: str) -> complex:
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise self.parse_error(f"malformed complex literal {value!r}; expected [re, im]", path)
            return complex(self._to_float(value[0], path), self._to_float(value[1], path))
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return complex(value)
        # YAML reads exponents without a dot, such as 1e-3, as strings
        if isinstance(value, str):
            return complex(self._to_float(value, path))
        raise self.parse_error(f"malformed complex literal {value!r}; expected [re, im]", path)

    def vector(self, path: str, dim: int, complex_values: bool = False, default=_MISSING):
        value = self.get(path, default)
        if value is None or value is default:
            return value
        if not isinstance(value, list) or len(value) != dim:
            raise self.parse_error(f"expected a list of {dim} entries", path)
        if complex_values:
            return np.array([self.complex_literal(x, path) for x in value], dtype=complex)
        return np.array([self._to_float(x, path) for x in value], dtype=float)

    def matrix(self, path: str, dim: int, default=_MISSING):
        value = self.get(path, default)
        if value is None or value is default:
            return value
        if not isinstance(value, list) or len(value) != dim or any(not isinstance(row, list) or len(row) != dim for row in value):
            raise self.parse_error(f"expected a {dim}x{dim} matrix as nested lists", path)
        return np.array([[self.complex_literal(x, path) for x in row] for row in value], dtype=complex)


def _parse_model(reader: _DocumentReader, dim: int):
    model = reader.section("model")
    variants = [key for key in ("linear", "abstract_frame") if key in model]
    if len(variants) != 1:
        raise SchemaError("exactly one of 'linear' or 'abstract_frame' is required", field="model")

    if variants[0] == "linear":
        h0 = require_hermitian(reader.matrix("model.linear.H0", dim), HERMITIAN_TOL, "H0")
        v = require_hermitian(reader.matrix("model.linear.V", dim), HERMITIAN_TOL, "V")
        return LinearModelSpec(h0=h0, v=v)

    connection = reader.matrix("model.abstract_frame.connection", dim)
    residual = anti_hermiticity_residual(connection)
    if residual > MATRIX_TOL:
        raise ValueError(f"connection not anti-Hermitian (max deviation {residual:.3e})")
    energies = reader.vector("model.abstract_frame.energies", dim, default=None)
    slopes = reader.vector("model.abstract_frame.energy_slopes", dim, default=None)
    if slopes is None and energies is not None:
        slopes = np.zeros(dim)
    return AbstractFrameSpec(connection=connection, energies=energies, energy_slopes=slopes)


def _parse_feedback(reader: _DocumentReader, dim: int, model) -> FeedbackConfig:
    reader.section("feedback")
    form = reader.choice("feedback.form", [f.value for f in FeedbackForm], default=FeedbackForm.LINEAR.value)
    raw = reader.get("feedback.observable")
    if isinstance(raw, str):
        if raw != HYBRID:
            raise reader.parse_error(f"observable must be a matrix or '{HYBRID}', got {raw!r}", "feedback.observable")
        if isinstance(model, AbstractFrameSpec) and model.energies is None:
            raise SchemaError("a hybrid observable needs model.abstract_frame.energies", field="feedback.observable")
        observable = HYBRID
    else:
        observable = require_hermitian(reader.matrix("feedback.observable", dim), HERMITIAN_TOL, "observable")

    drive = reader.get("feedback.drive", [])
    if not isinstance(drive, list):
        raise reader.parse_error("drive must be a list of polynomial coefficients", "feedback.drive")
    drive = tuple(reader._to_float(c, "feedback.drive") for c in drive)
    if form == FeedbackForm.OPEN_LOOP.value and not drive:
        raise SchemaError("open-loop feedback needs drive coefficients", field="feedback.drive")
    return FeedbackConfig(observable=observable, form=form, drive=drive)


def _parse_initial(reader: _DocumentReader, dim: int) -> InitialConfig:
    reader.section("initial")
    initial = InitialConfig(
        r0=reader.number("initial.r0", 0.0),
        state=reader.vector("initial.state", dim, complex_values=True, default=None),
        populations=reader.vector("initial.populations", dim, default=None),
        phases=reader.vector("initial.phases", dim, default=None),
        cbar=reader.matrix("initial.cbar", dim, default=None),
        eta=reader.number("initial.eta", None),
    )
    if initial.state is None and initial.populations is None and initial.cbar is None:
        raise SchemaError("one of state, populations or cbar is required", field="initial")
    return initial


def _parse_run(reader: _DocumentReader) -> RunConfig:
    reader.section("run")
    r_range = reader.get("run.r_range", None)
    if r_range is not None:
        if not isinstance(r_range, list) or len(r_range) != 2:
            raise reader.parse_error("r_range must be [low, high]", "run.r_range")
        r_range = (reader._to_float(r_range[0], "run.r_range"), reader._to_float(r_range[1], "run.r_range"))
        if not r_range[0] < r_range[1]:
            raise reader.parse_error("r_range must be increasing", "run.r_range")
    return RunConfig(
        mode=reader.choice("run.mode", RUN_MODES),
        horizon_t=reader.number("run.horizon_t", None),
        horizon_tau=reader.number("run.horizon_tau", None),
        r_range=r_range,
        payoffs=reader.choice("run.payoffs", PAYOFF_MODES, default="constant"),
    )


def _parse_integrator(reader: _DocumentReader) -> IntegratorConfig:
    reader.section("integrator", required=False)
    return IntegratorConfig(
        rtol=reader.number("integrator.rtol", RTOL),
        atol=reader.number("integrator.atol", ATOL),
        min_step=reader.number("integrator.min_step", MIN_STEP),
        sample_stride=reader.number("integrator.sample_stride", SAMPLE_STRIDE),
        step=reader.number("integrator.step", REDUCED_STEP),
        tau_f=reader.number("integrator.tau_f", None),
    )


def _check_mode(cfg: ScenarioConfig) -> None:
    mode, init = cfg.mode, cfg.initial
    if mode in ("exact", "compare"):
        if not cfg.is_linear:
            raise SchemaError(f"mode '{mode}' needs a linear model", field="model")
        if init.state is None and init.populations is None:
            raise SchemaError(f"mode '{mode}' needs initial.state or initial.populations", field="initial")
    if mode == "exact" and cfg.run.horizon_t is None:
        raise SchemaError("mode 'exact' needs run.horizon_t", field="run.horizon_t")
    if mode in ("reduced", "mixed", "compare") and cfg.run.horizon_tau is None:
        raise SchemaError(f"mode '{mode}' needs run.horizon_tau", field="run.horizon_tau")
    if mode == "compare" and not cfg.epsilon > 0:
        raise SchemaError("mode 'compare' needs epsilon > 0", field="epsilon")
    if mode == "reduced" and init.state is None and init.populations is None:
        raise SchemaError("mode 'reduced' needs initial.populations", field="initial")
    if init.eta is not None and (mode != "mixed" or init.populations is None):
        raise SchemaError("initial.eta builds a pseudo-pure state from populations in mixed mode", field="initial.eta")
    if cfg.feedback.form == FeedbackForm.OPEN_LOOP.value and mode not in ("exact",):
        raise SchemaError("open-loop drives are only integrated in exact mode", field="feedback.form")


def parse_document(document: dict, lines: Optional[dict] = None) -> ScenarioConfig:
    """
    Builds a ScenarioConfig from an already-loaded document, applying defaults.

    Raises:
        ParseError: For malformed values, naming the field and line.
        SchemaError: For missing or inconsistent fields.
        ValueError: For matrices that are not Hermitian or anti-Hermitian as declared.
    """
    reader = _DocumentReader(document, lines)
    unknown = set(document) - TOP_LEVEL_KEYS
    if unknown:
        logger.warning("Ignoring unknown scenario keys: %s", ", ".join(sorted(unknown)))

    dim = reader.integer("dim")
    if dim < 2:
        raise SchemaError(f"dim must be at least 2, got {dim}", field="dim")
    model = _parse_model(reader, dim)
    cfg = ScenarioConfig(
        name=reader.string("name"),
        description=reader.string("description", ""),
        dim=dim,
        model=model,
        feedback=_parse_feedback(reader, dim, model),
        initial=_parse_initial(reader, dim),
        epsilon=reader.number("epsilon"),
        run=_parse_run(reader),
        integrator=_parse_integrator(reader),
        gap_tol=reader.number("gap_tol", GAP_TOL),
    )
    if cfg.epsilon < 0:
        raise SchemaError("epsilon must be non-negative", field="epsilon")
    _check_mode(cfg)
    return cfg


def parse_scenario(text: str) -> ScenarioConfig:
    """
    Parses a scenario document.

    Args:
        text (str): YAML scenario text.

    Returns:
        ScenarioConfig: Fully populated configuration with defaults applied.
    """
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"invalid scenario document: {problem}", line=mark.line + 1 if mark else None) from exc
    if not isinstance(document, dict):
        raise ParseError("scenario document must be a mapping", line=1)
    return parse_document(document, _line_map(text))


def apply_overrides(document: dict, overrides: Iterable[str]) -> dict:
    """Sets dotted keys from 'key=value' strings; values are read as YAML scalars or lists."""
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ParseError(f"override {item!r} is not of the form key=value", field=item)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ParseError(f"override value {raw!r} is not valid YAML", field=key) from exc
        node = document
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ParseError("override path runs through a non-mapping value", field=key)
        node[parts[-1]] = value
        logger.info("Override %s = %r", key, value)
    return document


def load_scenario(filepath: str, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """
    Loads a scenario file and applies command-line overrides.

    Args:
        filepath (str): Path to the scenario document.
        overrides: 'dotted.key=value' strings.

    Returns:
        ScenarioConfig: The parsed configuration.

    Raises:
        FileNotFoundError: If the specified file does not exist.
        ParseError: If the file is empty or not valid YAML.
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"The file at {filepath} was not found.")

    with open(filepath, "r", encoding="utf-8") as handle:
        text = handle.read()
    if not text.strip():
        raise ParseError(f"The file at {filepath} is empty.")

    if not overrides:
        return parse_scenario(text)
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"The file at {filepath} is not valid YAML", line=mark.line + 1 if mark else None) from exc
    if not isinstance(document, dict):
        raise ParseError(f"The file at {filepath} is not a scenario mapping", line=1)
    return parse_document(apply_overrides(document, overrides), _line_map(text))


# --- rendering ---

def _pair(value: complex) -> list:
    return [float(value.real), float(value.imag)]


def _complex_vector(values) -> list:
    return [_pair(complex(x)) for x in values]


def _complex_matrix(values) -> list:
    return [[_pair(complex(x)) for x in row] for row in values]


def _real_list(values) -> list:
    return [float(x) for x in values]


def scenario_document(cfg: ScenarioConfig) -> dict:
    """Canonical plain-Python document of a configuration (the form that is rendered)."""
    document = {"name": cfg.name}
    if cfg.description:
        document["description"] = cfg.description
    document["dim"] = int(cfg.dim)
    document["epsilon"] = float(cfg.epsilon)
    document["gap_tol"] = float(cfg.gap_tol)

    if isinstance(cfg.model, LinearModelSpec):
        document["model"] = {"linear": {"H0": _complex_matrix(cfg.model.h0), "V": _complex_matrix(cfg.model.v)}}
    else:
        frame = {"connection": _complex_matrix(cfg.model.connection)}
        if cfg.model.energies is not None:
            frame["energies"] = _real_list(cfg.model.energies)
        if cfg.model.energy_slopes is not None:
            frame["energy_slopes"] = _real_list(cfg.model.energy_slopes)
        document["model"] = {"abstract_frame": frame}

    feedback = {
        "observable": HYBRID if cfg.is_hybrid else _complex_matrix(cfg.feedback.observable),
        "form": cfg.feedback.form,
    }
    if cfg.feedback.drive:
        feedback["drive"] = _real_list(cfg.feedback.drive)
    document["feedback"] = feedback

    init = cfg.initial
    initial = {"r0": float(init.r0)}
    if init.state is not None:
        initial["state"] = _complex_vector(init.state)
    if init.populations is not None:
        initial["populations"] = _real_list(init.populations)
    if init.phases is not None:
        initial["phases"] = _real_list(init.phases)
    if init.cbar is not None:
        initial["cbar"] = _complex_matrix(init.cbar)
    if init.eta is not None:
        initial["eta"] = float(init.eta)
    document["initial"] = initial

    run = {"mode": cfg.run.mode}
    if cfg.run.horizon_t is not None:
        run["horizon_t"] = float(cfg.run.horizon_t)
    if cfg.run.horizon_tau is not None:
        run["horizon_tau"] = float(cfg.run.horizon_tau)
    if cfg.run.r_range is not None:
        run["r_range"] = _real_list(cfg.run.r_range)
    run["payoffs"] = cfg.run.payoffs
    document["run"] = run

    integrator = {
        "rtol": float(cfg.integrator.rtol),
        "atol": float(cfg.integrator.atol),
        "min_step": float(cfg.integrator.min_step),
        "sample_stride": float(cfg.integrator.sample_stride),
        "step": float(cfg.integrator.step),
    }
    if cfg.integrator.tau_f is not None:
        integrator["tau_f"] = float(cfg.integrator.tau_f)
    document["integrator"] = integrator
    return document


class _ScenarioDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    if np.isnan(value):
        text = ".nan"
    elif np.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = format(value, ".17g")
        if "e" in text and "." not in text:
            mantissa, exponent = text.split("e")
            text = f"{mantissa}.0e{exponent}"
        elif "." not in text and "e" not in text:
            text += ".0"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_ScenarioDumper.add_representer(float, _represent_float)


def render_scenario(cfg: ScenarioConfig) -> str:
    """Renders a configuration as a scenario document; numbers carry 17 significant digits."""
    return yaml.dump(
        scenario_document(cfg),
        Dumper=_ScenarioDumper,
        sort_keys=False,
        default_flow_style=None,
        allow_unicode=True,
        width=120,
    )


def scenario_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(render_scenario(cfg).encode("utf-8")).hexdigest()
