"""
This module defines the scenario configuration and turns it into the objects the integrators consume:
the Hamiltonian model, the feedback law, initial data for every run mode and the payoff sources.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.common.config import (
    ATOL,
    GAP_TOL,
    HERMITIAN_TOL,
    MIN_STEP,
    REDUCED_STEP,
    RTOL,
    SAMPLE_STRIDE,
)
from src.common.errors import DimensionMismatch, SchemaError
from src.common.numerics import as_square_matrix, require_hermitian
from src.dynamics.exact import FeedbackForm, FeedbackSpec, IntegratorOptions
from src.dynamics.mixed import MixedAmplitudes, MixedScenario, hybrid_observable, pseudo_pure_amplitudes
from src.dynamics.reduced import ConstantPayoffs, FrameDependentPayoffs, SimplexState
from src.spectral.connection import ConnectionMatrix, adiabatic_matrix, frame_payoffs, payoff_matrices
from src.spectral.frames import HamiltonianModel, frame_at

RUN_MODES = ("exact", "reduced", "mixed", "compare")
PAYOFF_MODES = ("constant", "frame_dependent")
HYBRID = "hybrid"


def linear_model(H0, V) -> HamiltonianModel:
    """
    H[R] = H0 + R V with derivative V.

    Raises:
        DimensionMismatch: If H0 and V differ in shape.
        NotHermitian: If either matrix is not Hermitian.
    """
    H0 = require_hermitian(as_square_matrix(H0, "H0"), HERMITIAN_TOL, "H0")
    V = require_hermitian(as_square_matrix(V, "V"), HERMITIAN_TOL, "V")
    if H0.shape != V.shape:
        raise DimensionMismatch(f"H0 has shape {H0.shape} but V has shape {V.shape}")
    H0 = H0.copy()
    V = V.copy()
    return HamiltonianModel(
        dim=H0.shape[0],
        hamiltonian=lambda r: H0 + r * V,
        derivative=lambda r: V,
    )


@dataclass(eq=False)
class LinearModelSpec:
    h0: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class AbstractFrameSpec:
    """A scenario given directly by its connection and level energies, without a Hamiltonian."""

    connection: np.ndarray
    energies: Optional[np.ndarray] = None
    energy_slopes: Optional[np.ndarray] = None


@dataclass(eq=False)
class FeedbackConfig:
    # Lab-basis matrix for linear models, adiabatic-basis matrix for abstract frames, or "hybrid"
    observable: Union[np.ndarray, str]
    form: str = FeedbackForm.LINEAR.value
    drive: Tuple[float, ...] = ()


@dataclass(eq=False)
class InitialConfig:
    r0: float = 0.0
    state: Optional[np.ndarray] = None
    populations: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    cbar: Optional[np.ndarray] = None
    eta: Optional[float] = None


@dataclass(eq=False)
class RunConfig:
    mode: str
    horizon_t: Optional[float] = None
    horizon_tau: Optional[float] = None
    r_range: Optional[Tuple[float, float]] = None
    payoffs: str = "constant"


@dataclass(eq=False)
class IntegratorConfig:
    rtol: float = RTOL
    atol: float = ATOL
    min_step: float = MIN_STEP
    sample_stride: float = SAMPLE_STRIDE
    step: float = REDUCED_STEP
    tau_f: Optional[float] = None

    def options(self) -> IntegratorOptions:
        return IntegratorOptions(
            rtol=self.rtol,
            atol=self.atol,
            min_step=self.min_step,
            sample_stride=self.sample_stride,
        )


@dataclass(eq=False)
class ScenarioConfig:
    name: str
    dim: int
    model: Union[LinearModelSpec, AbstractFrameSpec]
    feedback: FeedbackConfig
    initial: InitialConfig
    epsilon: float
    run: RunConfig
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    gap_tol: float = GAP_TOL
    description: str = ""

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        from src.scenarios.loader import scenario_document

        return scenario_document(self) == scenario_document(other)

    @property
    def mode(self) -> str:
        return self.run.mode

    @property
    def is_linear(self) -> bool:
        return isinstance(self.model, LinearModelSpec)

    @property
    def is_hybrid(self) -> bool:
        return isinstance(self.feedback.observable, str) and self.feedback.observable == HYBRID

    @property
    def r_range(self) -> Tuple[float, float]:
        if self.run.r_range is not None:
            return self.run.r_range
        return (self.initial.r0 - 1.0, self.initial.r0 + 1.0)

    # --- builders ---

    def hamiltonian_model(self) -> HamiltonianModel:
        if not self.is_linear:
            raise SchemaError("an abstract-frame scenario has no Hamiltonian", field="model")
        return linear_model(self.model.h0, self.model.v)

    def lab_observable(self) -> np.ndarray:
        if self.is_hybrid:
            return -np.asarray(self.model.v, dtype=complex)
        if self.feedback.observable is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return np.asarray(self.feedback.observable, dtype=complex)

    def feedback_spec(self) -> FeedbackSpec:
        observable = self.lab_observable()
        if FeedbackForm(self.feedback.form) is FeedbackForm.OPEN_LOOP:
            return FeedbackSpec.open_loop_polynomial(observable, self.epsilon, self.feedback.drive)
        return FeedbackSpec(observable=observable, epsilon=self.epsilon)

    def connection_matrix(self) -> ConnectionMatrix:
        if self.is_linear:
            _, connection, _, _ = frame_payoffs(
                self.hamiltonian_model(), self.lab_observable(), self.initial.r0, self.gap_tol
            )
            return connection
        return ConnectionMatrix(self.model.connection)

    def adiabatic_observable(self) -> np.ndarray:
        """The observable in the adiabatic basis at the initial R."""
        if self.is_linear:
            frame = frame_at(self.hamiltonian_model(), self.initial.r0, self.gap_tol)
            return adiabatic_matrix(self.lab_observable(), frame)
        if self.is_hybrid:
            return hybrid_observable(self.model.energies, self.model.energy_slopes, self.connection_matrix())
        return np.asarray(self.feedback.observable, dtype=complex)

    def initial_amplitudes(self) -> np.ndarray:
        """Adiabatic amplitudes c_n at tau = 0."""
        init = self.initial
        if init.populations is not None:
            phases = init.phases if init.phases is not None else np.zeros(self.dim)
            return np.sqrt(init.populations) * np.exp(1j * np.asarray(phases))
        if init.state is not None and self.is_linear:
            frame = frame_at(self.hamiltonian_model(), init.r0, self.gap_tol)
            return frame.vectors.conj().T @ init.state
        raise SchemaError("initial amplitudes need 'populations' (or 'state' for a linear model)", field="initial")

    def initial_state(self) -> np.ndarray:
        """Lab-basis psi(0) for the exact integrator."""
        if self.initial.state is not None:
            return np.asarray(self.initial.state, dtype=complex)
        frame = frame_at(self.hamiltonian_model(), self.initial.r0, self.gap_tol)
        return frame.vectors @ self.initial_amplitudes()

    def initial_simplex(self) -> SimplexState:
        return SimplexState.from_amplitudes(self.initial_amplitudes(), r_bar=self.initial.r0)

    def initial_mixed(self) -> MixedAmplitudes:
        init = self.initial
        if init.cbar is not None:
            return MixedAmplitudes(init.cbar, init.r0)
        amplitudes = self.initial_amplitudes()
        if init.eta is not None:
            return pseudo_pure_amplitudes(init.eta, amplitudes, init.r0)
        return MixedAmplitudes.pure(amplitudes, init.r0)

    def payoff_source(self):
        if self.is_linear and self.run.payoffs == "frame_dependent":
            return FrameDependentPayoffs(self.hamiltonian_model(), self.lab_observable(), self.gap_tol)
        if self.is_linear:
            _, _, a_ad, payoffs = frame_payoffs(
                self.hamiltonian_model(), self.lab_observable(), self.initial.r0, self.gap_tol
            )
            return ConstantPayoffs.from_matrices(payoffs, a_ad)
        a_ad = self.adiabatic_observable()
        return ConstantPayoffs.from_matrices(payoff_matrices(self.connection_matrix(), a_ad), a_ad)

    def mixed_scenario(self) -> MixedScenario:
        connection = self.connection_matrix()
        energies = slopes = None
        if not self.is_linear:
            energies, slopes = self.model.energies, self.model.energy_slopes
        return MixedScenario(connection, self.adiabatic_observable(), energies, slopes)
