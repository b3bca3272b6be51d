"""
This module integrates the mixed-state reduced equations for the adiabatic amplitudes
c_nm = <n|rho|m> exp(i gamma_m - i gamma_n) under linear feedback, builds the hybrid observable
A = -dH/dR in the adiabatic basis, and maps pseudo-pure states onto the pure theory.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from src.common.config import MATRIX_TOL, REDUCED_STEP
from src.common.errors import DimensionMismatch, InvalidStep, NonFiniteState, TraceDrift
from src.common.numerics import as_square_matrix, require_hermitian, require_same_dimension, require_vector
from src.spectral.connection import ConnectionMatrix

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-6
STATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MixedAmplitudes:
    cbar: np.ndarray
    r_bar: float = 0.0

    def __post_init__(self):
        cbar = require_hermitian(as_square_matrix(self.cbar, "cbar"), STATE_TOL, "cbar")
        trace = np.trace(cbar)
        if abs(trace - 1.0) > STATE_TOL:
            raise ValueError(f"cbar must have unit trace, got {trace:.12g}")
        diagonal = np.diag(cbar).real
        if np.any(diagonal < -STATE_TOL) or np.any(diagonal > 1.0 + STATE_TOL):
            raise ValueError(f"cbar diagonal outside [0, 1]: {diagonal}")
        object.__setattr__(self, "cbar", np.array(cbar, copy=True))
        object.__setattr__(self, "r_bar", float(self.r_bar))

    @property
    def dim(self) -> int:
        return self.cbar.shape[0]

    @classmethod
    def pure(cls, amplitudes, r_bar: float = 0.0) -> "MixedAmplitudes":
        amplitudes = np.asarray(amplitudes, dtype=complex)
        amplitudes = amplitudes / np.linalg.norm(amplitudes)
        return cls(np.outer(amplitudes, amplitudes.conj()), r_bar)


@dataclass(frozen=True, eq=False)
class MixedScenario:
    """
    Frame-level specification: connection and adiabatic-basis observable, optionally with the
    energies and slopes -dE_l/dR the hybrid observable is built from.
    """

    connection: ConnectionMatrix
    a_ad: np.ndarray
    energies: Optional[np.ndarray] = None
    energy_slopes: Optional[np.ndarray] = None

    def __post_init__(self):
        a_ad = require_hermitian(as_square_matrix(self.a_ad, "a_ad"), MATRIX_TOL, "a_ad")
        require_same_dimension(self.connection.dim, a_ad, "a_ad")
        object.__setattr__(self, "a_ad", a_ad)
        if self.energies is not None:
            object.__setattr__(self, "energies", require_vector(self.energies, self.dim, "energies", dtype=float))
        if self.energy_slopes is not None:
            slopes = require_vector(self.energy_slopes, self.dim, "energy_slopes", dtype=float)
            object.__setattr__(self, "energy_slopes", slopes)

    @property
    def dim(self) -> int:
        return self.connection.dim

    @classmethod
    def hybrid(cls, energies, energy_slopes, connection: ConnectionMatrix) -> "MixedScenario":
        return cls(
            connection=connection,
            a_ad=hybrid_observable(energies, energy_slopes, connection),
            energies=energies,
            energy_slopes=energy_slopes,
        )

    def with_observable(self, a_ad) -> "MixedScenario":
        return MixedScenario(self.connection, a_ad, self.energies, self.energy_slopes)


@dataclass(frozen=True, eq=False)
class MixedPath:
    """
    Sampled mixed amplitudes. `asymmetry` is the Hermiticity correction applied at each step,
    `min_eigenvalue` the smallest eigenvalue of cbar (positivity is monitored, not enforced).
    """

    taus: np.ndarray
    cbar: np.ndarray
    r_bar: np.ndarray
    asymmetry: np.ndarray
    min_eigenvalue: np.ndarray

    @property
    def dim(self) -> int:
        return self.cbar.shape[1]

    @property
    def trace_drift(self) -> np.ndarray:
        return np.abs(np.trace(self.cbar, axis1=1, axis2=2) - 1.0)

    @property
    def populations(self) -> np.ndarray:
        return np.diagonal(self.cbar, axis1=1, axis2=2).real

    def final(self) -> MixedAmplitudes:
        return MixedAmplitudes(self.cbar[-1], self.r_bar[-1])

    def to_frame(self) -> pd.DataFrame:
        columns = {"tau": self.taus}
        for n in range(self.dim):
            for m in range(self.dim):
                columns[f"re_c_{n + 1}{m + 1}"] = self.cbar[:, n, m].real
                columns[f"im_c_{n + 1}{m + 1}"] = self.cbar[:, n, m].imag
        columns["r_bar"] = self.r_bar
        columns["trace"] = np.trace(self.cbar, axis1=1, axis2=2).real
        return pd.DataFrame(columns)


def _velocity(cbar: np.ndarray, connection: np.ndarray, a_ad: np.ndarray):
    # coupling[n, l] = <n|l'> A_ln, zero on the diagonal
    coupling = connection * a_ad.T
    np.fill_diagonal(coupling, 0.0)
    weighted = coupling * cbar
    r_dot = float(np.real(np.sum(np.diag(cbar) * np.diag(a_ad))))
    diag = np.diag(connection)
    gauge = r_dot * cbar * (diag[:, None] + diag.conj()[None, :])
    return cbar @ weighted - weighted @ cbar - gauge, r_dot


def mixed_rhs(state: MixedAmplitudes, scenario: MixedScenario):
    """
    Velocity of the mixed amplitudes and of R-bar.

    cbar'_nm = -sum_{l!=n} <n|l'> A_ln c_nl c_lm - sum_{l!=m} <l'|m> c_nl c_lm A_ml
               - R' c_nm (<n|n'> + <m'|m>),
    R' = sum_l c_ll A_ll,
    where every bra derivative <l'|m> = -<l|m'> is taken from the stored connection.

    Returns:
        tuple: (cbar_velocity, r_velocity).
    """
    if state.dim != scenario.dim:
        raise DimensionMismatch(f"state has dimension {state.dim}, scenario has {scenario.dim}")
    return _velocity(state.cbar, scenario.connection.entries, scenario.a_ad)


def integrate_mixed(
    initial: MixedAmplitudes,
    scenario: MixedScenario,
    horizon_tau: float,
    step: float = REDUCED_STEP,
) -> MixedPath:
    """
    Fixed-step RK4 advance of the mixed amplitudes.

    cbar is re-symmetrized after every step and the removed anti-Hermitian part is recorded.

    Raises:
        InvalidStep: If step is not positive.
        TraceDrift: If |trace - 1| exceeds 1e-6.
        NonFiniteState: If the state becomes non-finite.
    """
    if not step > 0 or not np.isfinite(step):
        raise InvalidStep(f"mixed step must be positive, got {step}")
    if not horizon_tau > 0:
        raise ValueError(f"horizon_tau must be positive, got {horizon_tau}")
    if initial.dim != scenario.dim:
        raise DimensionMismatch(f"initial state has dimension {initial.dim}, scenario has {scenario.dim}")

    connection = scenario.connection.entries
    a_ad = scenario.a_ad
    count = int(np.ceil(horizon_tau / step - 1e-9))
    h = horizon_tau / count
    taus = h * np.arange(count + 1)

    cbar_series = np.empty((count + 1, initial.dim, initial.dim), dtype=complex)
    r_series = np.empty(count + 1)
    asymmetry = np.zeros(count + 1)
    min_eigenvalue = np.empty(count + 1)

    cbar, r_bar = initial.cbar.copy(), initial.r_bar
    cbar_series[0], r_series[0] = cbar, r_bar
    min_eigenvalue[0] = np.linalg.eigvalsh(cbar)[0]
    warned = False

    for k in range(1, count + 1):
        k1, r1 = _velocity(cbar, connection, a_ad)
        k2, r2 = _velocity(cbar + 0.5 * h * k1, connection, a_ad)
        k3, r3 = _velocity(cbar + 0.5 * h * k2, connection, a_ad)
        k4, r4 = _velocity(cbar + h * k3, connection, a_ad)
        cbar = cbar + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        r_bar = r_bar + (h / 6.0) * (r1 + 2 * r2 + 2 * r3 + r4)

        if not (np.all(np.isfinite(cbar)) and np.isfinite(r_bar)):
            raise NonFiniteState("non-finite mixed state", time=taus[k])
        symmetric = 0.5 * (cbar + cbar.conj().T)
        asymmetry[k] = float(np.max(np.abs(cbar - symmetric)))
        cbar = symmetric

        drift = abs(np.trace(cbar) - 1.0)
        if drift > TRACE_TOL:
            raise TraceDrift(f"trace drifted by {drift:.3e}", time=taus[k])

        cbar_series[k], r_series[k] = cbar, r_bar
        min_eigenvalue[k] = np.linalg.eigvalsh(cbar)[0]
        if min_eigenvalue[k] < -STATE_TOL and not warned:
            logger.warning("cbar lost positivity at tau=%.4g (min eigenvalue %.3e)", taus[k], min_eigenvalue[k])
            warned = True

    logger.debug("Mixed RK4: %d steps of %.3e, max asymmetry %.3e", count, h, asymmetry.max())
    return MixedPath(taus=taus, cbar=cbar_series, r_bar=r_series, asymmetry=asymmetry, min_eigenvalue=min_eigenvalue)


def hybrid_observable(energies, energy_slopes, connection: ConnectionMatrix) -> np.ndarray:
    """
    A = -dH/dR in the adiabatic basis: A(n, l) = (E_n - E_l) <n|l'> off the diagonal and
    A(l, l) = -dE_l/dR.
    """
    energies = require_vector(energies, connection.dim, "energies", dtype=float)
    energy_slopes = require_vector(energy_slopes, connection.dim, "energy_slopes", dtype=float)
    a_ad = (energies[:, None] - energies[None, :]) * connection.entries
    a_ad[np.diag_indices(connection.dim)] = energy_slopes
    return require_hermitian(a_ad, 1e-12, "hybrid observable")


def pseudo_pure_map(eta: float, a_ad) -> np.ndarray:
    """A -> eta^2 A, applied to every element."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta ** 2 * as_square_matrix(a_ad, "a_ad")


def pseudo_pure_amplitudes(eta: float, amplitudes, r_bar: float = 0.0) -> MixedAmplitudes:
    """(1 - eta) 1/d + eta |c><c| for a pure amplitude vector c."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    pure = MixedAmplitudes.pure(amplitudes).cbar
    d = pure.shape[0]
    return MixedAmplitudes((1.0 - eta) * np.eye(d) / d + eta * pure, r_bar)


def pure_component(cbar, eta: float) -> np.ndarray:
    """Inverse of pseudo_pure_amplitudes: (cbar - (1 - eta) 1/d) / eta."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    cbar = as_square_matrix(cbar, "cbar")
    d = cbar.shape[0]
    return (cbar - (1.0 - eta) * np.eye(d) / d) / eta
