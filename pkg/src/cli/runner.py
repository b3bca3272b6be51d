"""
This module executes one scenario in its run mode (exact, reduced, mixed or compare), writes the CSV
series and collects the diagnostics that go into the run report.
"""

import logging
import os
import time

import numpy as np
import pandas as pd

from src.common.config import WINDOW_PERIODS
from src.dynamics.analysis import (
    IDENTITY_TOL,
    classify_longtime,
    growth_identity_residuals,
    phase_identity_residuals,
    relative_entropy_series,
)
from src.dynamics.exact import integrate_closed_loop
from src.dynamics.mixed import integrate_mixed, pure_component
from src.dynamics.reduced import ConstantPayoffs, integrate_reduced
from src.dynamics.series import default_window, extract_adiabatic_series, population_drift, window_average
from src.reporting.artifacts import RunReport, save_run_report, save_series_csv
from src.scenarios.loader import scenario_hash
from src.scenarios.models import ScenarioConfig
from src.spectral.connection import gauge_invariance_residual
from src.spectral.frames import frame_at

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"


class _ArtifactWriter:
    """Writes the series of one run into a single directory with a shared header."""

    def __init__(self, cfg: ScenarioConfig, out_dir: str, mode: str):
        self.out_dir = out_dir
        self.header = {
            "scenario": cfg.name,
            "scenario_sha256": scenario_hash(cfg),
            "mode": mode,
            "dim": cfg.dim,
            "epsilon": format(cfg.epsilon, ".17g"),
        }
        self.paths = []

    def write(self, series: str, df) -> str:
        path = os.path.join(self.out_dir, f"{series}.csv")
        save_series_csv(df, path, dict(self.header, series=series))
        self.paths.append(path)
        return path


def _nanmax(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0 or np.all(np.isnan(values)):
        return 0.0
    return float(np.nanmax(values))


def _exact_trajectory(cfg: ScenarioConfig, horizon: float):
    model = cfg.hamiltonian_model()
    trajectory = integrate_closed_loop(
        model,
        cfg.feedback_spec(),
        cfg.initial_state(),
        cfg.initial.r0,
        horizon,
        cfg.integrator.options(),
    )
    series = extract_adiabatic_series(trajectory, model, cfg.gap_tol)
    return trajectory, series


def run_exact(cfg: ScenarioConfig, writer: _ArtifactWriter) -> dict:
    """
    Integrates the closed-loop Schroedinger equation and projects it on the adiabatic frames.

    Returns:
        dict: norm_drift_max, population_drift, min_gap and the final R.
    """
    trajectory, series = _exact_trajectory(cfg, cfg.run.horizon_t)
    writer.write("trajectory", trajectory.to_frame())
    writer.write("adiabatic", series.to_frame())
    return {
        "norm_drift_max": float(np.max(np.abs(trajectory.norm_drift))),
        "population_drift": population_drift(series),
        "min_gap": float(np.min(series.frame_gaps)),
        "r_final": float(trajectory.r_values[-1]),
        "samples": int(trajectory.times.size),
        "integrator_steps": int(trajectory.steps),
    }


def _reduced_path(cfg: ScenarioConfig):
    source = cfg.payoff_source()
    path = integrate_reduced(cfg.initial_simplex(), source, cfg.run.horizon_tau, cfg.integrator.step)
    return source, path


def run_reduced(cfg: ScenarioConfig, writer: _ArtifactWriter, seed: int = 0) -> dict:
    """
    Integrates the reduced replicator dynamics and checks the identities of constant-payoff runs.

    The relative entropy column is measured against the interior fixed point in the conservative
    scenario and against the limit point in the extinction scenario.

    Returns:
        dict: Residuals, classification, fixed point, entropy drift and, for linear models, the
        gauge invariance residual of the payoff matrices.
    """
    source, path = _reduced_path(cfg)
    diagnostics = {}

    # 1. Time-average and phase identities
    if isinstance(source, ConstantPayoffs):
        diagnostics["tamo_residual_max"] = _nanmax(growth_identity_residuals(path))
        diagnostics["phase_identity_residual_max"] = _nanmax(phase_identity_residuals(path))
        if diagnostics["phase_identity_residual_max"] > IDENTITY_TOL:
            logger.warning(
                "phase identity residual %.3e above %g", diagnostics["phase_identity_residual_max"], IDENTITY_TOL
            )
        a = source.a
    else:
        diagnostics["tamo_residual_max"] = None
        diagnostics["phase_identity_residual_max"] = None
        a = source.evaluate(cfg.initial.r0).a

    # 2. Long-time classification and relative entropy
    classification = classify_longtime(a, path.p[0])
    diagnostics["classification"] = classification.as_dict()
    diagnostics["fixed_point"] = classification.fixed_point
    entropy = relative_entropy_series(classification.limit, path)
    if classification.kind == "conservative":
        diagnostics["entropy_drift_max"] = float(np.max(np.abs(entropy - entropy[0])))
    diagnostics["entropy_final"] = float(entropy[-1])

    # 3. Gauge probe
    if cfg.is_linear:
        model = cfg.hamiltonian_model()
        frame = frame_at(model, cfg.initial.r0, cfg.gap_tol)
        rng = np.random.default_rng(seed)
        diagnostics["gauge_invariance_residual"] = gauge_invariance_residual(
            frame, model.slope(cfg.initial.r0), cfg.lab_observable(), rng, gap_tol=cfg.gap_tol
        )

    diagnostics["p_final"] = path.p[-1]
    diagnostics["r_bar_final"] = float(path.r_bar[-1])
    writer.write("reduced", path.to_frame(entropy))
    return diagnostics


def run_mixed(cfg: ScenarioConfig, writer: _ArtifactWriter) -> dict:
    """
    Integrates the mixed-state amplitudes.

    Returns:
        dict: trace_drift_max, asymmetry_max, min_eigenvalue, final populations and the largest
        final off-diagonal magnitude.
    """
    path = integrate_mixed(cfg.initial_mixed(), cfg.mixed_scenario(), cfg.run.horizon_tau, cfg.integrator.step)
    writer.write("mixed", path.to_frame())
    final = path.cbar[-1]
    off_diagonal = final - np.diag(np.diag(final))
    diagnostics = {
        "trace_drift_max": float(np.max(path.trace_drift)),
        "asymmetry_max": float(np.max(path.asymmetry)),
        "min_eigenvalue": float(np.min(path.min_eigenvalue)),
        "populations_final": path.populations[-1],
        "off_diagonal_final_max": float(np.max(np.abs(off_diagonal))),
        "r_bar_final": float(path.r_bar[-1]),
    }
    if cfg.initial.eta is not None:
        diagnostics["pure_component_populations_final"] = np.diag(pure_component(final, cfg.initial.eta)).real
    return diagnostics


def run_compare(cfg: ScenarioConfig, writer: _ArtifactWriter) -> dict:
    """
    Runs the exact and the reduced dynamics on one scenario and compares the window-averaged
    populations on the exact sample grid.

    Both series are averaged with the same window so truncated end windows bias them alike.

    Returns:
        dict: sup_norm_deviation, the window used and the exact-run diagnostics.
    """
    # 1. Exact run over the same slow-time horizon
    horizon_tau = cfg.run.horizon_tau
    trajectory, series = _exact_trajectory(cfg, horizon_tau / cfg.epsilon)
    writer.write("adiabatic", series.to_frame())

    # 2. Reduced run
    _, path = _reduced_path(cfg)
    writer.write("reduced", path.to_frame())

    # 3. Window averages on the exact grid
    min_gap = float(np.min(series.frame_gaps))
    tau_f = cfg.integrator.tau_f or default_window(cfg.epsilon, min_gap, WINDOW_PERIODS)
    taus = series.taus
    exact_p = series.populations / series.populations.sum(axis=1, keepdims=True)
    reduced_p = np.column_stack([np.interp(taus, path.taus, path.p[:, n]) for n in range(cfg.dim)])
    exact_avg = window_average(exact_p, taus, tau_f)
    reduced_avg = window_average(reduced_p, taus, tau_f)
    deviation = np.abs(exact_avg - reduced_avg)

    columns = {"tau": taus}
    for n in range(cfg.dim):
        columns[f"p_exact_{n + 1}"] = exact_avg[:, n]
        columns[f"p_reduced_{n + 1}"] = reduced_avg[:, n]
        columns[f"deviation_{n + 1}"] = deviation[:, n]
    writer.write("deviation", pd.DataFrame(columns))
    logger.info("Compare %s: tau_f=%.4g, sup deviation %.3e", cfg.name, tau_f, deviation.max())
    return {
        "sup_norm_deviation": float(deviation.max()),
        "tau_f": float(tau_f),
        "norm_drift_max": float(np.max(np.abs(trajectory.norm_drift))),
        "min_gap": min_gap,
    }


def run_scenario(cfg: ScenarioConfig, out_dir: str, seed: int = 0) -> RunReport:
    """
    Runs a scenario in its declared mode and writes all artifacts below out_dir.

    Args:
        cfg (ScenarioConfig): Parsed scenario.
        out_dir (str): Directory for the CSV series and report.json.
        seed (int): Seed of the randomized diagnostics.

    Returns:
        RunReport: The report that was written.

    Raises:
        IntegrationError: If an integrator fails.
        FrameMismatch: If adiabatic frames cannot be matched between samples.
        DegenerateSpectrum: If the spectrum becomes degenerate along the run.
        ClassificationError: If the long-time classification of a reduced run fails.
    """
    mode = cfg.mode
    logger.info("Running scenario %s in %s mode", cfg.name, mode)
    writer = _ArtifactWriter(cfg, out_dir, mode)
    started = time.perf_counter()

    if mode == "exact":
        diagnostics = run_exact(cfg, writer)
    elif mode == "reduced":
        diagnostics = run_reduced(cfg, writer, seed)
    elif mode == "mixed":
        diagnostics = run_mixed(cfg, writer)
    else:
        diagnostics = run_compare(cfg, writer)

    report = RunReport(
        scenario_name=cfg.name,
        mode=mode,
        wall_time_seconds=time.perf_counter() - started,
        diagnostics=diagnostics,
        artifact_paths=list(writer.paths),
        scenario_hash=writer.header["scenario_sha256"],
    )
    report_path = os.path.join(out_dir, REPORT_FILE)
    report.artifact_paths.append(report_path)
    save_run_report(report, report_path)
    logger.info("Finished %s in %.2fs", cfg.name, report.wall_time_seconds)
    return report
