"""
This module integrates the reduced adiabatic equations in slow time tau = eps * t:
populations follow the replicator equation p_l' = p_l (a p)_l, phases accumulate from the symmetric
matrix b, and the slow coordinate drifts as R' = sum_n p_n A_nn.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from src.common.config import GAP_TOL, REDUCED_STEP
from src.common.errors import DimensionMismatch, InvalidStep, NonFiniteState, SimplexViolation
from src.common.numerics import as_square_matrix, require_vector
from src.spectral.connection import PayoffMatrices, frame_payoffs
from src.spectral.frames import HamiltonianModel

logger = logging.getLogger(__name__)

# Negative populations above this are treated as rounding and clamped to zero
CLAMP_TOL = 1e-12
# Largest renormalization accepted after clamping
RENORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SimplexState:
    p: np.ndarray
    phi: np.ndarray = None
    r_bar: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DimensionMismatch(f"populations must be a vector of length >= 2, got shape {p.shape}")
        phi = require_vector(self.phi if self.phi is not None else np.zeros(p.size), p.size, "phi", dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > RENORMALIZATION_TOL:
            raise ValueError(f"populations must lie on the probability simplex, got {p}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "r_bar", float(self.r_bar))

    @property
    def dim(self) -> int:
        return self.p.size

    @classmethod
    def from_amplitudes(cls, amplitudes, r_bar: float = 0.0) -> "SimplexState":
        """Splits normalized amplitudes c_n = sqrt(p_n) exp(i phi_n)."""
        amplitudes = np.asarray(amplitudes, dtype=complex)
        p = np.abs(amplitudes) ** 2
        return cls(p=p / p.sum(), phi=np.angle(amplitudes), r_bar=r_bar)


@dataclass(frozen=True, eq=False)
class PayoffSnapshot:
    """Everything the reduced right-hand side needs at one value of R-bar."""

    a: np.ndarray
    b: np.ndarray
    adiag: np.ndarray
    diag_connection: np.ndarray


@dataclass(frozen=True, eq=False)
class ConstantPayoffs:
    a: np.ndarray
    b: np.ndarray
    adiag: np.ndarray

    def __post_init__(self):
        payoffs = PayoffMatrices(a=self.a, b=self.b)
        adiag = require_vector(self.adiag, payoffs.dim, "adiag", dtype=float)
        object.__setattr__(self, "a", payoffs.a)
        object.__setattr__(self, "b", payoffs.b)
        object.__setattr__(self, "adiag", adiag)

    @classmethod
    def from_matrices(cls, payoffs: PayoffMatrices, A_ad=None) -> "ConstantPayoffs":
        adiag = np.zeros(payoffs.dim) if A_ad is None else np.diag(as_square_matrix(A_ad)).real
        return cls(a=payoffs.a, b=payoffs.b, adiag=adiag)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def evaluate(self, r_bar: float) -> PayoffSnapshot:
        return PayoffSnapshot(self.a, self.b, self.adiag, np.zeros(self.dim, dtype=complex))


@dataclass(frozen=True, eq=False)
class FrameDependentPayoffs:
    """Payoffs rebuilt from the adiabatic frame at R-bar on every evaluation."""

    model: HamiltonianModel
    observable: np.ndarray
    gap_tol: float = GAP_TOL

    @property
    def dim(self) -> int:
        return self.model.dim

    def evaluate(self, r_bar: float) -> PayoffSnapshot:
        _, connection, a_ad, payoffs = frame_payoffs(self.model, self.observable, r_bar, self.gap_tol)
        return PayoffSnapshot(payoffs.a, payoffs.b, np.diag(a_ad).real, connection.diagonal)


PayoffSource = Union[ConstantPayoffs, FrameDependentPayoffs]


@dataclass(frozen=True, eq=False)
class ReducedPath:
    taus: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    r_bar: np.ndarray
    source: object = None

    @property
    def dim(self) -> int:
        return self.p.shape[1]

    @property
    def is_constant(self) -> bool:
        return isinstance(self.source, ConstantPayoffs)

    @property
    def running_average(self) -> np.ndarray:
        """p-bar(T), the trapezoidal mean of p over [0, T] at every sample (p(0) at T = 0)."""
        integral = cumulative_trapezoid(self.p, self.taus, axis=0, initial=0.0)
        elapsed = (self.taus - self.taus[0])[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            average = integral / elapsed
        average[0] = self.p[0]
        return average

    def state(self, index: int) -> SimplexState:
        return SimplexState(p=self.p[index], phi=self.phi[index], r_bar=self.r_bar[index])

    @property
    def final(self) -> SimplexState:
        return self.state(-1)

    def to_frame(self, entropy: np.ndarray = None) -> pd.DataFrame:
        columns = {"tau": self.taus}
        for prefix, values in (("p", self.p), ("phi", self.phi)):
            for n in range(self.dim):
                columns[f"{prefix}_{n + 1}"] = values[:, n]
        columns["r_bar"] = self.r_bar
        columns["entropy"] = entropy if entropy is not None else np.full(self.taus.size, np.nan)
        return pd.DataFrame(columns)


def replicator_rhs(p, a) -> np.ndarray:
    """v_l = p_l * sum_n a[l][n] p_n."""
    a = np.asarray(a, dtype=float)
    p = require_vector(p, a.shape[0], "p", dtype=float)
    return p * (a @ p)


def _reduced_rhs(p: np.ndarray, r_bar: float, source: PayoffSource):
    snapshot = source.evaluate(r_bar)
    p_dot = p * (snapshot.a @ p)
    r_dot = float(p @ snapshot.adiag)
    # i<l|l'> R' with <l|l'> purely imaginary
    phi_dot = -snapshot.diag_connection.imag * r_dot - snapshot.b @ p
    return p_dot, phi_dot, r_dot


def _project_to_simplex(p: np.ndarray, tau: float) -> np.ndarray:
    if p.min() < -CLAMP_TOL:
        raise SimplexViolation(f"population {p.min():.3e} below -{CLAMP_TOL:g}", time=tau)
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > RENORMALIZATION_TOL:
        raise SimplexViolation(f"renormalization by {total - 1.0:.3e} exceeds {RENORMALIZATION_TOL:g}", time=tau)
    return p / total


def integrate_reduced(
    initial: SimplexState,
    payoffs: PayoffSource,
    horizon_tau: float,
    step: float = REDUCED_STEP,
) -> ReducedPath:
    """
    Advances populations, phases and R-bar with classical fixed-step RK4.

    The step is shrunk slightly when needed so that an integer number of steps lands on horizon_tau.

    Args:
        initial (SimplexState): Populations on the simplex, phases and R-bar at tau = 0.
        payoffs (PayoffSource): ConstantPayoffs or FrameDependentPayoffs.
        horizon_tau (float): Final slow time.
        step (float): RK4 step in slow time.

    Returns:
        ReducedPath: One sample per step, starting with the initial state.

    Raises:
        InvalidStep: If step is not positive.
        SimplexViolation: If a population goes below -1e-12 or the renormalization exceeds 1e-9.
        NonFiniteState: If the state becomes non-finite.
    """
    if not step > 0 or not np.isfinite(step):
        raise InvalidStep(f"reduced step must be positive, got {step}")
    if not horizon_tau > 0:
        raise ValueError(f"horizon_tau must be positive, got {horizon_tau}")
    if initial.dim != payoffs.dim:
        raise DimensionMismatch(f"initial state has dimension {initial.dim}, payoffs have {payoffs.dim}")

    count = int(np.ceil(horizon_tau / step - 1e-9))
    h = horizon_tau / count
    taus = h * np.arange(count + 1)
    p_series = np.empty((count + 1, initial.dim))
    phi_series = np.empty((count + 1, initial.dim))
    r_series = np.empty(count + 1)

    p, phi, r_bar = initial.p.copy(), initial.phi.copy(), initial.r_bar
    p_series[0], phi_series[0], r_series[0] = p, phi, r_bar

    for k in range(1, count + 1):
        k1 = _reduced_rhs(p, r_bar, payoffs)
        k2 = _reduced_rhs(p + 0.5 * h * k1[0], r_bar + 0.5 * h * k1[2], payoffs)
        k3 = _reduced_rhs(p + 0.5 * h * k2[0], r_bar + 0.5 * h * k2[2], payoffs)
        k4 = _reduced_rhs(p + h * k3[0], r_bar + h * k3[2], payoffs)

        p = p + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        phi = phi + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r_bar = r_bar + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])

        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(phi)) and np.isfinite(r_bar)):
            raise NonFiniteState("non-finite reduced state", time=taus[k])
        p = _project_to_simplex(p, taus[k])
        p_series[k], phi_series[k], r_series[k] = p, phi, r_bar

    logger.debug("Reduced RK4: %d steps of %.3e up to tau=%g", count, h, horizon_tau)
    return ReducedPath(taus=taus, p=p_series, phi=phi_series, r_bar=r_series, source=payoffs)
