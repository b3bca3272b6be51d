"""
This module extracts the adiabatic amplitudes c_n(t) = <n[R(t)]|psi(t)> exp(-i gamma_n(t)) from an
exact trajectory, together with populations, unwrapped phases and dynamical phases, and provides the
sliding-window average that separates the slow motion from the fast oscillations.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from src.common.config import GAP_TOL
from src.common.errors import DegenerateSpectrum, FrameMismatch, WindowTooWide
from src.dynamics.exact import Trajectory
from src.spectral.frames import MIN_ALIGNMENT_OVERLAP, HamiltonianModel, column_overlaps, frame_at, gauge_align

logger = logging.getLogger(__name__)

GAUGES = ("transport", "raw")
MIN_WINDOW_SAMPLES = 10


@dataclass(frozen=True, eq=False)
class AdiabaticSeries:
    times: np.ndarray
    epsilon: float
    r_values: np.ndarray
    gamma: np.ndarray
    amplitudes: np.ndarray
    populations: np.ndarray
    phases: np.ndarray
    frame_gaps: np.ndarray
    gauge: str = "transport"

    @property
    def taus(self) -> np.ndarray:
        return self.epsilon * self.times

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[1]

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times, "tau": self.taus}
        for prefix, values in (("p", self.populations), ("phi", self.phases), ("gamma", self.gamma)):
            for n in range(self.dim):
                columns[f"{prefix}_{n + 1}"] = values[:, n]
        return pd.DataFrame(columns)


def extract_adiabatic_series(
    traj: Trajectory,
    model: HamiltonianModel,
    gap_tol: float = GAP_TOL,
    gauge: str = "transport",
) -> AdiabaticSeries:
    """
    Projects every sample of a trajectory on the adiabatic frame at R(t).

    With gauge="transport" each frame is gauge-aligned to the previous one, starting from the raw
    gauge at the first sample. With gauge="raw" every frame keeps the raw eigenframe gauge, which
    leaves the open-path Berry phase inside the extracted phases.

    Args:
        traj (Trajectory): The exact trajectory.
        model (HamiltonianModel): The model the trajectory was integrated with.
        gap_tol (float): Smallest level spacing accepted.
        gauge (str): "transport" or "raw".

    Returns:
        AdiabaticSeries: gamma, amplitudes, populations, unwrapped phases and frame gaps per sample.

    Raises:
        DegenerateSpectrum: With the offending sample index.
        FrameMismatch: If two successive frames cannot be matched, with the sample index.
    """
    if gauge not in GAUGES:
        raise ValueError(f"gauge must be one of {GAUGES}, got {gauge!r}")

    count, dim = traj.states.shape
    energies = np.empty((count, dim))
    projections = np.empty((count, dim), dtype=complex)
    gaps = np.empty(count)

    previous = None
    for i, r_value in enumerate(traj.r_values):
        try:
            frame = frame_at(model, r_value, gap_tol)
        except DegenerateSpectrum as exc:
            raise DegenerateSpectrum(str(exc), min_gap=exc.min_gap, sample_index=i) from exc

        if previous is not None:
            try:
                if gauge == "transport":
                    frame = gauge_align(previous, frame)
                else:
                    overlaps = column_overlaps(previous, frame)
                    if np.any(np.abs(overlaps) < MIN_ALIGNMENT_OVERLAP):
                        raise FrameMismatch("level crossing or undersampled path", overlaps=overlaps)
            except FrameMismatch as exc:
                raise FrameMismatch(str(exc), overlaps=exc.overlaps, sample_index=i) from exc

        energies[i] = frame.energies
        projections[i] = frame.vectors.conj().T @ traj.states[i]
        gaps[i] = frame.min_gap
        previous = frame

    gamma = -cumulative_trapezoid(energies, traj.times, axis=0, initial=0.0)
    amplitudes = projections * np.exp(-1j * gamma)
    populations = np.abs(amplitudes) ** 2
    phases = np.unwrap(np.angle(amplitudes), axis=0)

    logger.debug("Extracted %d adiabatic samples (gauge=%s, min gap %.3e)", count, gauge, gaps.min())
    return AdiabaticSeries(
        times=traj.times,
        epsilon=traj.epsilon,
        r_values=traj.r_values,
        gamma=gamma,
        amplitudes=amplitudes,
        populations=populations,
        phases=phases,
        frame_gaps=gaps,
        gauge=gauge,
    )


def window_average(values, taus, tau_f: float) -> np.ndarray:
    """
    Centered moving average over a window of length tau_f in slow time.

    The window is rounded to an odd number of samples. End points use the truncated window. Complex
    input is averaged component-wise.

    Args:
        values: Series of shape (N,) or (N, k), real or complex, sampled on a uniform grid.
        taus: Slow times of the samples.
        tau_f (float): Window length.

    Returns:
        np.ndarray: Averaged series with the shape of `values`.

    Raises:
        WindowTooWide: If tau_f exceeds half the series span.
        ValueError: If the window covers fewer than 10 samples.
    """
    values = np.asarray(values)
    taus = np.asarray(taus, dtype=float)
    if taus.size < 2 or values.shape[0] != taus.size:
        raise ValueError("values and taus must have the same length of at least 2 samples")

    span = taus[-1] - taus[0]
    if tau_f > span / 2:
        raise WindowTooWide(f"window {tau_f:g} exceeds half the series span {span:g}")
    spacing = span / (taus.size - 1)
    window = int(round(tau_f / spacing))
    if window < MIN_WINDOW_SAMPLES:
        raise ValueError(f"window {tau_f:g} covers {window} samples, at least {MIN_WINDOW_SAMPLES} needed")
    # A centred rolling mean is only symmetric for an odd number of samples
    if window % 2 == 0:
        window += 1

    if np.iscomplexobj(values):
        return window_average(values.real, taus, tau_f) + 1j * window_average(values.imag, taus, tau_f)

    frame = pd.DataFrame(values.reshape(values.shape[0], -1))
    averaged = frame.rolling(window=window, center=True, min_periods=1).mean().to_numpy()
    return averaged.reshape(values.shape)


def default_window(epsilon: float, min_gap: float, periods: float) -> float:
    """tau_f = periods * epsilon * 2 pi / min_gap: `periods` fast oscillations of the closest pair."""
    return periods * epsilon * 2 * np.pi / min_gap


def population_drift(series: AdiabaticSeries) -> float:
    """Largest |p_n(t) - p_n(0)| after dividing out the norm drift of the trajectory."""
    normalized = series.populations / series.populations.sum(axis=1, keepdims=True)
    return float(np.max(np.abs(normalized - normalized[0])))
