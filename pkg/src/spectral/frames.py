"""
This module builds the adiabatic eigenframe of a parameter-dependent Hamiltonian H[R].
It provides the Hamiltonian model container, the gauge-fixed eigenframe, frame alignment along
a path, and the open-path Berry phase used as an independent check of extracted phases.
"""

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from src.common.config import GAP_TOL, HERMITIAN_TOL
from src.common.errors import DegenerateSpectrum, DimensionMismatch, FrameMismatch
from src.common.numerics import as_square_matrix, require_hermitian

# Finite-difference spot check of the analytic derivative at construction
DERIVATIVE_CHECK_STEP = 1e-5
DERIVATIVE_CHECK_RTOL = 1e-6
DERIVATIVE_CHECK_POINTS = (-0.5, 0.0, 0.5)

# Minimum |<n_ref|n_tgt>| accepted when aligning two frames
MIN_ALIGNMENT_OVERLAP = 0.5


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """
    A map R -> H[R] together with its analytic derivative dH/dR.

    The derivative is spot-checked against a central finite difference at three sample R values
    when the model is constructed.
    """

    dim: int
    hamiltonian: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]
    check_points: Sequence[float] = DERIVATIVE_CHECK_POINTS

    def __post_init__(self):
        if int(self.dim) < 2:
            raise DimensionMismatch(f"Hamiltonian dimension must be at least 2, got {self.dim}")
        for r in self.check_points:
            h = self.matrix(r)
            dh = self.slope(r)
            h_plus = self.matrix(r + DERIVATIVE_CHECK_STEP)
            h_minus = self.matrix(r - DERIVATIVE_CHECK_STEP)
            finite_difference = (h_plus - h_minus) / (2 * DERIVATIVE_CHECK_STEP)
            scale = max(1.0, float(np.max(np.abs(dh))), float(np.max(np.abs(h))))
            deviation = float(np.max(np.abs(finite_difference - dh)))
            if deviation > DERIVATIVE_CHECK_RTOL * scale:
                raise ValueError(
                    f"derivative does not match the finite difference of the Hamiltonian at R={r} "
                    f"(deviation {deviation:.3e})"
                )

    def matrix(self, r_value: float) -> np.ndarray:
        h = as_square_matrix(self.hamiltonian(r_value), "hamiltonian")
        if h.shape[0] != self.dim:
            raise DimensionMismatch(f"hamiltonian({r_value}) has dimension {h.shape[0]}, expected {self.dim}")
        return require_hermitian(h, HERMITIAN_TOL, "hamiltonian")

    def slope(self, r_value: float) -> np.ndarray:
        dh = as_square_matrix(self.derivative(r_value), "derivative")
        if dh.shape[0] != self.dim:
            raise DimensionMismatch(f"derivative({r_value}) has dimension {dh.shape[0]}, expected {self.dim}")
        return require_hermitian(dh, HERMITIAN_TOL, "derivative")


@dataclass(frozen=True, eq=False)
class AdiabaticFrame:
    """Eigenvalues (ascending) and eigenvector columns of H at one value of R."""

    r_value: float
    energies: np.ndarray
    vectors: np.ndarray
    min_gap: float
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "energies", _frozen(np.asarray(self.energies, dtype=float)))
        object.__setattr__(self, "vectors", _frozen(np.asarray(self.vectors, dtype=complex)))

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def orthonormality_residual(self) -> float:
        gram = self.vectors.conj().T @ self.vectors
        return float(np.max(np.abs(gram - np.eye(self.dim))))


def apply_raw_gauge(vectors: np.ndarray) -> np.ndarray:
    """
    Makes the largest-magnitude component of every column real and positive.
    Ties (within 1e-12) are broken by the lowest index.
    """
    gauged = np.array(vectors, dtype=complex, copy=True)
    for n in range(gauged.shape[1]):
        column = gauged[:, n]
        magnitudes = np.abs(column)
        k = int(np.flatnonzero(magnitudes >= magnitudes.max() - 1e-12)[0])
        gauged[:, n] = column * (np.conj(column[k]) / magnitudes[k])
    return gauged


def eigenframe(h, r_value: float, gap_tol: float = GAP_TOL) -> AdiabaticFrame:
    """
    Diagonalizes a Hermitian matrix and returns its eigenframe in the raw gauge.

    Args:
        h: Hermitian d x d matrix H[R].
        r_value (float): The parameter value the matrix belongs to.
        gap_tol (float): Smallest adjacent level spacing accepted.

    Returns:
        AdiabaticFrame: Ascending energies and gauge-fixed eigenvector columns.

    Raises:
        NotHermitian: If the matrix fails the symmetry check.
        DegenerateSpectrum: If any adjacent gap is <= gap_tol.
    """
    if gap_tol <= 0:
        raise ValueError(f"gap_tol must be positive, got {gap_tol}")
    h = require_hermitian(as_square_matrix(h, "H"), HERMITIAN_TOL, "H")

    energies, vectors = la.eigh(h)
    gaps = np.diff(energies)
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    if min_gap <= gap_tol:
        raise DegenerateSpectrum(
            f"adjacent levels closer than gap_tol={gap_tol:g} at R={r_value} (min gap {min_gap:.3e})",
            min_gap=min_gap,
        )

    vectors = apply_raw_gauge(vectors)
    residual = float(np.max(np.linalg.norm(h @ vectors - vectors * energies[None, :], axis=0)))
    return AdiabaticFrame(r_value=float(r_value), energies=energies, vectors=vectors, min_gap=min_gap, residual=residual)


def frame_at(model: HamiltonianModel, r_value: float, gap_tol: float = GAP_TOL) -> AdiabaticFrame:
    return eigenframe(model.matrix(r_value), r_value, gap_tol)


def column_overlaps(reference: AdiabaticFrame, target: AdiabaticFrame) -> np.ndarray:
    """<n_reference|n_target> for every column n."""
    if reference.dim != target.dim:
        raise DimensionMismatch(f"cannot compare frames of dimension {reference.dim} and {target.dim}")
    return np.sum(reference.vectors.conj() * target.vectors, axis=0)


def gauge_align(reference: AdiabaticFrame, target: AdiabaticFrame) -> AdiabaticFrame:
    """
    Rephases the columns of `target` so that every <n_reference|n_target> is real and positive.

    Raises:
        FrameMismatch: If any overlap magnitude is below 0.5 (frames too far apart or a level crossing).
    """
    overlaps = column_overlaps(reference, target)
    magnitudes = np.abs(overlaps)
    if np.any(magnitudes < MIN_ALIGNMENT_OVERLAP):
        worst = int(np.argmin(magnitudes))
        raise FrameMismatch(
            f"level {worst + 1} overlap {magnitudes[worst]:.3f} between R={reference.r_value} "
            f"and R={target.r_value} is below {MIN_ALIGNMENT_OVERLAP}",
            overlaps=overlaps,
        )
    phases = overlaps.conj() / magnitudes
    return dataclasses.replace(target, vectors=target.vectors * phases[None, :])


def regauge(frame: AdiabaticFrame, phases) -> AdiabaticFrame:
    """Multiplies column n by exp(i * phases[n]); energies are unchanged."""
    factors = np.exp(1j * np.asarray(phases, dtype=float))
    return dataclasses.replace(frame, vectors=frame.vectors * factors[None, :])


def berry_phase_open_path(
    model: HamiltonianModel,
    r_start: float,
    r_end: float,
    n_points: int = 2001,
    gap_tol: float = GAP_TOL,
) -> np.ndarray:
    """
    Open-path Berry phase of every level, i * integral <n|d_R n> dR, in the raw eigenframe gauge.

    Computed from the products of neighbouring overlaps, -sum_k arg <n(R_k)|n(R_k+1)>, which needs
    no derivative of the eigenvectors.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    grid = np.linspace(r_start, r_end, n_points)
    phases = np.zeros(model.dim)
    previous = frame_at(model, grid[0], gap_tol)
    for k in range(1, n_points):
        current = frame_at(model, grid[k], gap_tol)
        overlaps = column_overlaps(previous, current)
        if np.any(np.abs(overlaps) < MIN_ALIGNMENT_OVERLAP):
            raise FrameMismatch(
                f"eigenvectors jump between R={grid[k - 1]:.6g} and R={grid[k]:.6g}; refine the grid",
                overlaps=overlaps,
                sample_index=k,
            )
        phases -= np.angle(overlaps)
        previous = current
    return phases
