"""
This module computes the Berry connection <l|d_R n> of an adiabatic frame and turns it, together with
a feedback observable, into the payoff matrices a (antisymmetric) and b (symmetric) that drive the
reduced population and phase dynamics.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.common.config import GAP_TOL, MATRIX_TOL
from src.common.errors import DegenerateSpectrum, DimensionMismatch, InvalidStep
from src.common.numerics import (
    anti_hermiticity_residual,
    as_square_matrix,
    require_hermitian,
    require_same_dimension,
)
from src.spectral.frames import AdiabaticFrame, HamiltonianModel, frame_at, gauge_align, regauge

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConnectionMatrix:
    """
    Anti-Hermitian matrix with entry (l, n) = <l|d_R n>.

    `hermitian_residual` is only non-zero for finite-difference estimates, where it records the
    discarded Hermitian part of the difference quotient.
    """

    entries: np.ndarray
    hermitian_residual: float = 0.0

    def __post_init__(self):
        entries = np.array(as_square_matrix(self.entries, "connection"), copy=True)
        residual = anti_hermiticity_residual(entries)
        if residual > MATRIX_TOL:
            raise ValueError(f"connection not anti-Hermitian (max deviation {residual:.3e})")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries)

    def __getitem__(self, index):
        return self.entries[index]


@dataclass(frozen=True, eq=False)
class PayoffMatrices:
    """Replicator game data: `a` drives the populations, `b` the feedback-generated phases."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True)
        if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"payoff matrices must be square and equal in shape, got {a.shape} and {b.shape}")
        if np.any(a + a.T != 0):
            raise ValueError("payoff matrix a must be antisymmetric")
        if np.any(b != b.T):
            raise ValueError("phase matrix b must be symmetric")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def _level_differences(energies: np.ndarray) -> np.ndarray:
    # (l, n) -> E_n - E_l
    return energies[None, :] - energies[:, None]


def connection_analytic(frame: AdiabaticFrame, dH, gap_tol: float = GAP_TOL) -> ConnectionMatrix:
    """
    Off-diagonal connection from the Hellmann-Feynman relation <l|dH|n> / (E_n - E_l).

    The diagonal is set to zero, i.e. the parallel-transport gauge along the R path.

    Args:
        frame (AdiabaticFrame): Eigenframe at the point of interest.
        dH: Hermitian matrix dH/dR at the same point.
        gap_tol (float): Smallest level spacing accepted.

    Returns:
        ConnectionMatrix: The anti-Hermitian connection.

    Raises:
        DegenerateSpectrum: If two levels are closer than gap_tol.
    """
    dH = require_hermitian(as_square_matrix(dH, "dH"), MATRIX_TOL, "dH")
    require_same_dimension(frame.dim, dH, "dH")

    u = frame.vectors
    projected = u.conj().T @ dH @ u
    differences = _level_differences(frame.energies)
    off_diagonal = ~np.eye(frame.dim, dtype=bool)
    if np.any(np.abs(differences[off_diagonal]) < gap_tol):
        raise DegenerateSpectrum(
            f"level spacing below gap_tol={gap_tol:g} at R={frame.r_value}",
            min_gap=frame.min_gap,
        )

    entries = np.zeros_like(projected)
    entries[off_diagonal] = projected[off_diagonal] / differences[off_diagonal]
    entries = 0.5 * (entries - entries.conj().T)
    return ConnectionMatrix(entries)


def connection_fd(
    model: HamiltonianModel,
    r_value: float,
    step: float = 1e-4,
    gap_tol: float = GAP_TOL,
) -> ConnectionMatrix:
    """
    Central finite-difference connection <l(R)|[n(R + s/2) - n(R - s/2)]>/s.

    Both side frames are gauge-aligned to the central frame. The anti-Hermitian part of the
    quotient is returned; the Hermitian part is O(s^2) and kept as `hermitian_residual`.

    Raises:
        InvalidStep: If step is not a positive finite number.
    """
    if not np.isfinite(step) or step <= 0:
        raise InvalidStep(f"finite-difference step must be positive, got {step}")

    center = frame_at(model, r_value, gap_tol)
    plus = gauge_align(center, frame_at(model, r_value + step / 2, gap_tol))
    minus = gauge_align(center, frame_at(model, r_value - step / 2, gap_tol))

    quotient = center.vectors.conj().T @ (plus.vectors - minus.vectors) / step
    anti_hermitian = 0.5 * (quotient - quotient.conj().T)
    hermitian_residual = float(np.max(np.abs(0.5 * (quotient + quotient.conj().T))))
    return ConnectionMatrix(anti_hermitian, hermitian_residual=hermitian_residual)


def adiabatic_matrix(A_lab, frame: AdiabaticFrame) -> np.ndarray:
    """Returns U^H A U with U the frame's eigenvector columns, i.e. <n|A|m>."""
    A_lab = require_hermitian(as_square_matrix(A_lab, "observable"), MATRIX_TOL, "observable")
    require_same_dimension(frame.dim, A_lab, "observable")
    u = frame.vectors
    projected = u.conj().T @ A_lab @ u
    return 0.5 * (projected + projected.conj().T)


def payoff_matrices(connection: ConnectionMatrix, A_ad) -> PayoffMatrices:
    """
    Builds a[l][n] = -2 Re(<l|n'> A_nl) and b[l][n] = Im(<l|n'> A_nl).

    Only the upper triangle is computed; the lower triangle is mirrored (with a sign for a), so the
    symmetries hold bit-exactly. Diagonals are zero.
    """
    A_ad = require_hermitian(as_square_matrix(A_ad, "A_ad"), MATRIX_TOL, "A_ad")
    require_same_dimension(connection.dim, A_ad, "A_ad")

    d = connection.dim
    products = connection.entries * A_ad.T
    upper = np.triu_indices(d, k=1)
    lower = (upper[1], upper[0])

    a = np.zeros((d, d))
    b = np.zeros((d, d))
    a[upper] = -2.0 * products[upper].real
    a[lower] = -a[upper]
    b[upper] = products[upper].imag
    b[lower] = b[upper]
    return PayoffMatrices(a=a, b=b)


def frame_payoffs(model: HamiltonianModel, observable, r_value: float, gap_tol: float = GAP_TOL):
    """
    Frame, connection, adiabatic observable and payoffs at one R, in that order.
    """
    frame = frame_at(model, r_value, gap_tol)
    connection = connection_analytic(frame, model.slope(r_value), gap_tol)
    a_ad = adiabatic_matrix(observable, frame)
    return frame, connection, a_ad, payoff_matrices(connection, a_ad)


def gauge_invariance_residual(
    frame: AdiabaticFrame,
    dH,
    observable,
    rng: np.random.Generator,
    trials: int = 4,
    gap_tol: float = GAP_TOL,
) -> float:
    """
    Largest change of a and b when the frame columns are multiplied by random unit phases.

    a and b are gauge invariant, so the result should sit at rounding level.
    """
    reference = payoff_matrices(connection_analytic(frame, dH, gap_tol), adiabatic_matrix(observable, frame))
    worst = 0.0
    for _ in range(trials):
        phases = rng.uniform(0.0, 2 * np.pi, size=frame.dim)
        probed = regauge(frame, phases)
        payoffs = payoff_matrices(connection_analytic(probed, dH, gap_tol), adiabatic_matrix(observable, probed))
        worst = max(
            worst,
            float(np.max(np.abs(payoffs.a - reference.a))),
            float(np.max(np.abs(payoffs.b - reference.b))),
        )
    logger.debug("Gauge probe over %d trials: max payoff change %.3e", trials, worst)
    return worst
