"""
This module checks a parsed scenario before it is run: the spectral gap over the sampled R range,
the non-resonance condition on level differences, an adiabaticity estimate and a bound on the
feedback force. Warnings never block a run; a degenerate initial frame does.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from src.common.config import EPSILON_WARNING, RESONANCE_SAMPLES
from src.common.errors import DegenerateSpectrum
from src.dynamics.exact import FeedbackForm
from src.scenarios.models import ScenarioConfig
from src.spectral.frames import eigenframe, frame_at

logger = logging.getLogger(__name__)

# Collisions closer than this multiple of gap_tol are reported
RESONANCE_FACTOR = 10.0


@dataclass
class ValidationReport:
    name: str
    min_gap: float = float("inf")
    min_gap_r: float = 0.0
    resonances: List[dict] = field(default_factory=list)
    adiabaticity: float = 0.0
    feedback_bound: float = 0.0
    warnings: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "min_gap": self.min_gap,
            "min_gap_r": self.min_gap_r,
            "resonances": self.resonances,
            "adiabaticity": self.adiabaticity,
            "feedback_bound": self.feedback_bound,
            "warnings": list(self.warnings),
            "errors": list(self.errors),
        }


def _canonical(combo):
    m, n, l, k = combo
    # (m,n,l,k), (l,k,m,n), (n,m,k,l) and (k,l,n,m) describe the same collision
    return min((m, n, l, k), (l, k, m, n), (n, m, k, l), (k, l, n, m))


def level_collisions(energies: np.ndarray, threshold: float) -> List[tuple]:
    """
    Index tuples (m, n, l, k), 1-based, with |(E_m - E_n) - (E_l - E_k)| < threshold for m != n and
    m != l, the combinations the averaging step requires to be distinct.
    """
    d = energies.size
    found = set()
    for m, n, l, k in itertools.product(range(d), repeat=4):
        if m == n or m == l:
            continue
        if abs((energies[m] - energies[n]) - (energies[l] - energies[k])) < threshold:
            found.add(_canonical((m + 1, n + 1, l + 1, k + 1)))
    return sorted(found)


def _sampled_spectra(cfg: ScenarioConfig):
    """Energies and ||dH|| at the sampled R values of a linear model."""
    model = cfg.hamiltonian_model()
    low, high = cfg.r_range
    grid = np.linspace(low, high, RESONANCE_SAMPLES)
    spectra, derivative_norms = [], []
    for r_value in grid:
        energies = np.linalg.eigvalsh(model.matrix(r_value))
        spectra.append((r_value, energies))
        derivative_norms.append(np.linalg.norm(model.slope(r_value), 2))
    return spectra, max(derivative_norms)


def _abstract_spectrum(cfg: ScenarioConfig):
    energies = np.asarray(cfg.model.energies, dtype=float)
    differences = energies[:, None] - energies[None, :]
    generator = differences * cfg.model.connection
    if cfg.model.energy_slopes is not None:
        generator = generator - np.diag(cfg.model.energy_slopes)
    return [(cfg.initial.r0, np.sort(energies))], np.linalg.norm(generator, 2)


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """
    Checks the scenario's spectrum, the non-resonance condition and the adiabatic regime.

    Args:
        cfg (ScenarioConfig): Parsed scenario.

    Returns:
        ValidationReport: Minimum gap, resonance collisions, adiabaticity estimate, feedback bound,
        warnings and errors.

    Raises:
        DegenerateSpectrum: If the frame at the initial R is degenerate.
    """
    report = ValidationReport(name=cfg.name)

    # 1. Initial frame must be non-degenerate
    if cfg.is_linear:
        frame = frame_at(cfg.hamiltonian_model(), cfg.initial.r0, cfg.gap_tol)
        spectra, derivative_norm = _sampled_spectra(cfg)
    elif cfg.model.energies is not None:
        frame = eigenframe(np.diag(cfg.model.energies), cfg.initial.r0, cfg.gap_tol)
        spectra, derivative_norm = _abstract_spectrum(cfg)
    else:
        frame, spectra, derivative_norm = None, [], float(np.linalg.norm(cfg.model.connection, 2))
        report.warnings.append("abstract frame without energies: gap and resonance checks skipped")

    # 2. Gap and resonance sweep over the sampled R values
    threshold = RESONANCE_FACTOR * cfg.gap_tol
    for r_value, energies in spectra:
        gaps = np.diff(energies)
        if gaps.min() < report.min_gap:
            report.min_gap, report.min_gap_r = float(gaps.min()), float(r_value)
        for combo in level_collisions(energies, threshold):
            report.resonances.append({"r": float(r_value), "levels": list(combo)})
    if frame is not None and report.min_gap <= cfg.gap_tol:
        report.warnings.append(f"spectrum nearly degenerate at R={report.min_gap_r:.4g} (gap {report.min_gap:.3e})")
    if report.resonances:
        first = report.resonances[0]
        report.warnings.append(
            f"level differences collide at {len(report.resonances)} sampled points "
            f"(first at R={first['r']:.4g}, levels {tuple(first['levels'])}); the averaged equations may not apply"
        )

    # 3. Adiabatic regime
    if np.isfinite(report.min_gap) and report.min_gap > 0:
        report.adiabaticity = float(cfg.epsilon * derivative_norm / report.min_gap ** 2)
    if cfg.epsilon > EPSILON_WARNING:
        report.warnings.append(f"epsilon={cfg.epsilon:g} is above {EPSILON_WARNING:g}")
    if report.adiabaticity > EPSILON_WARNING:
        report.warnings.append(f"adiabaticity estimate {report.adiabaticity:.3g} is not small")

    # 4. Informational bound on |F|
    if cfg.feedback.form == FeedbackForm.OPEN_LOOP.value:
        low, high = cfg.r_range
        drive = cfg.feedback_spec().drive
        report.feedback_bound = float(max(abs(drive(r)) for r in np.linspace(low, high, RESONANCE_SAMPLES)))
    else:
        observable = cfg.lab_observable() if cfg.is_linear else cfg.adiabatic_observable()
        report.feedback_bound = float(np.max(np.abs(np.linalg.eigvalsh(observable))))

    for message in report.warnings:
        logger.warning("%s: %s", cfg.name, message)
    logger.info("Validated scenario %s: min gap %.4g, %d warnings", cfg.name, report.min_gap, len(report.warnings))
    return report


def validate_or_report(cfg: ScenarioConfig) -> ValidationReport:
    """Like validate_scenario, but records a degenerate initial frame as an error instead of raising."""
    try:
        return validate_scenario(cfg)
    except DegenerateSpectrum as exc:
        report = ValidationReport(name=cfg.name)
        report.errors.append(str(exc))
        return report
