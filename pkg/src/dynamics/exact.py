"""
This module integrates the exact closed-loop system: the Schroedinger equation i|psi'> = H[R]|psi>
coupled to the feedback law R' = eps * F, where F is either the measured expectation <psi|A|psi>
or an open-loop drive F(R).
It provides the feedback specification, integrator options, the sampled trajectory and the helpers
used to inspect it.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from scipy.integrate import RK45

from src.common.config import ATOL, EPSILON_WARNING, HERMITIAN_TOL, MIN_STEP, RTOL, SAMPLE_STRIDE
from src.common.errors import DimensionMismatch, InvalidStep, NonFiniteState, StepSizeUnderflow
from src.common.numerics import as_square_matrix, require_hermitian, require_vector
from src.spectral.frames import HamiltonianModel

logger = logging.getLogger(__name__)


class FeedbackForm(str, Enum):
    LINEAR = "linear"
    OPEN_LOOP = "open_loop"


@dataclass(frozen=True, eq=False)
class FeedbackSpec:
    """
    Feedback law R' = epsilon * F.

    For the linear form F = <psi|A|psi>; for the open-loop form F = drive(R) and the observable is
    only carried along for reporting.
    """

    observable: np.ndarray
    epsilon: float
    form: FeedbackForm = FeedbackForm.LINEAR
    drive: Optional[Callable[[float], float]] = None
    drive_coefficients: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        observable = require_hermitian(as_square_matrix(self.observable, "observable"), HERMITIAN_TOL, "observable")
        object.__setattr__(self, "observable", observable)
        object.__setattr__(self, "form", FeedbackForm(self.form))
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be a non-negative number, got {self.epsilon}")
        if self.epsilon > EPSILON_WARNING:
            logger.warning("epsilon=%g is above %g; the adiabatic reduction is not expected to hold", self.epsilon, EPSILON_WARNING)
        if self.form is FeedbackForm.OPEN_LOOP and self.drive is None:
            raise ValueError("open-loop feedback needs a drive F(R)")

    @classmethod
    def open_loop_polynomial(cls, observable, epsilon: float, coefficients: Sequence[float]) -> "FeedbackSpec":
        """Open-loop drive F(R) = c0 + c1*R + c2*R^2 + ..."""
        coefficients = tuple(float(c) for c in coefficients) or (0.0,)
        return cls(
            observable=observable,
            epsilon=epsilon,
            form=FeedbackForm.OPEN_LOOP,
            drive=Polynomial(coefficients),
            drive_coefficients=coefficients,
        )

    @property
    def dim(self) -> int:
        return self.observable.shape[0]

    def force(self, psi: np.ndarray, r_value: float) -> float:
        if self.form is FeedbackForm.LINEAR:
            return expectation(psi, self.observable)
        return float(self.drive(r_value))


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = RTOL
    atol: float = ATOL
    min_step: float = MIN_STEP
    sample_stride: float = SAMPLE_STRIDE
    max_step: float = np.inf

    def __post_init__(self):
        for name in ("rtol", "atol", "min_step", "sample_stride", "max_step"):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidStep(f"integrator option {name} must be positive, got {value}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled exact trajectory. `norm_drift` is ||psi(t)|| - 1 at every sample."""

    times: np.ndarray
    states: np.ndarray
    r_values: np.ndarray
    epsilon: float
    steps: int = 0

    @property
    def norm_drift(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1) - 1.0

    @property
    def taus(self) -> np.ndarray:
        return self.epsilon * self.times

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        for n in range(self.dim):
            columns[f"re_psi_{n + 1}"] = self.states[:, n].real
            columns[f"im_psi_{n + 1}"] = self.states[:, n].imag
        columns["R"] = self.r_values
        columns["norm"] = np.linalg.norm(self.states, axis=1)
        return pd.DataFrame(columns)


def expectation(psi, A_lab) -> float:
    """
    Returns the real number <psi|A|psi>.

    Raises:
        DimensionMismatch: If psi and A have different dimensions.
        ValueError: If the imaginary part exceeds 1e-12 (A not Hermitian).
    """
    A_lab = as_square_matrix(A_lab, "observable")
    psi = require_vector(psi, A_lab.shape[0], "psi")
    value = np.vdot(psi, A_lab @ psi)
    scale = max(1.0, float(np.max(np.abs(A_lab)))) * max(1.0, float(np.vdot(psi, psi).real))
    if abs(value.imag) > 1e-12 * scale:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}; observable not Hermitian")
    return float(value.real)


def sample_times(horizon: float, stride: float) -> np.ndarray:
    count = int(np.floor(horizon / stride + 1e-9))
    grid = stride * np.arange(count + 1)
    if horizon - grid[-1] > 1e-9 * stride:
        grid = np.append(grid, horizon)
    else:
        grid[-1] = horizon
    return grid


def _pack(psi: np.ndarray, r_value: float) -> np.ndarray:
    return np.concatenate([psi.real, psi.imag, [r_value]])


def _unpack(y: np.ndarray, dim: int):
    return y[:dim] + 1j * y[dim:2 * dim], y[2 * dim]


def integrate_closed_loop(
    model: HamiltonianModel,
    feedback: FeedbackSpec,
    psi0,
    r0: float,
    horizon: float,
    opts: IntegratorOptions = None,
) -> Trajectory:
    """
    Integrates the coupled Schroedinger and feedback equations with an adaptive RK45 pair.

    The ODE state is (Re psi, Im psi, R). The state is never renormalized, so the norm drift of the
    returned trajectory measures integrator fidelity.

    Args:
        model (HamiltonianModel): H[R] and its derivative.
        feedback (FeedbackSpec): The feedback law.
        psi0: Normalized initial state.
        r0 (float): Initial value of R.
        horizon (float): Final fast time.
        opts (IntegratorOptions, optional): Tolerances and sampling stride.

    Returns:
        Trajectory: Samples every opts.sample_stride in fast time, plus the horizon.

    Raises:
        StepSizeUnderflow: If the step controller goes below opts.min_step.
        NonFiniteState: If any component becomes NaN or infinite.
    """
    opts = opts or IntegratorOptions()
    dim = model.dim
    if feedback.dim != dim:
        raise DimensionMismatch(f"observable has dimension {feedback.dim}, model has {dim}")
    psi0 = require_vector(psi0, dim, "psi0")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError(f"psi0 must be normalized (norm {np.linalg.norm(psi0):.12f})")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")

    epsilon = float(feedback.epsilon)

    def rhs(_t, y):
        psi, r_value = _unpack(y, dim)
        h_psi = model.hamiltonian(r_value) @ psi
        # psi' = -i H psi
        r_dot = epsilon * feedback.force(psi, r_value) if epsilon else 0.0
        return np.concatenate([h_psi.imag, -h_psi.real, [r_dot]])

    grid = sample_times(horizon, opts.sample_stride)
    states = np.empty((grid.size, dim), dtype=complex)
    r_values = np.empty(grid.size)
    states[0], r_values[0] = psi0, r0
    next_sample = 1

    solver = RK45(
        rhs,
        0.0,
        _pack(psi0, r0),
        horizon,
        rtol=opts.rtol,
        atol=opts.atol,
        max_step=opts.max_step,
    )
    steps = 0
    while solver.status == "running":
        message = solver.step()
        steps += 1
        if solver.status == "failed":
            raise StepSizeUnderflow(f"RK45 failed: {message}", time=solver.t)
        if not np.all(np.isfinite(solver.y)):
            raise NonFiniteState("non-finite state", time=solver.t)
        if solver.status == "running" and solver.step_size < opts.min_step:
            raise StepSizeUnderflow(
                f"step size {solver.step_size:.3e} below min_step {opts.min_step:.3e}", time=solver.t
            )

        stop = next_sample
        while stop < grid.size and grid[stop] <= solver.t:
            stop += 1
        if stop > next_sample:
            dense = solver.dense_output()
            values = dense(grid[next_sample:stop])
            states[next_sample:stop] = (values[:dim] + 1j * values[dim:2 * dim]).T
            r_values[next_sample:stop] = values[2 * dim]
            next_sample = stop

    states[-1], r_values[-1] = _unpack(solver.y, dim)
    logger.debug("RK45 finished %d steps over t=[0, %g] with %d samples", steps, horizon, grid.size)
    return Trajectory(times=grid, states=states, r_values=r_values, epsilon=epsilon, steps=steps)


def overlap_series(first: Trajectory, second: Trajectory) -> np.ndarray:
    """|<phi(t)|psi(t)>| for two trajectories sampled on the same grid."""
    if first.times.shape != second.times.shape or not np.allclose(first.times, second.times):
        raise ValueError("trajectories must share the same sample times")
    return np.abs(np.sum(first.states.conj() * second.states, axis=1))
