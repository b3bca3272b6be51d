"""
This module analyzes reduced paths and payoff matrices: running time averages and the identities they
satisfy, the interior fixed point of a zero-sum game, relative entropy, the long-time classification
into conservative and extinction scenarios, and the two-level closed-form solution.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.special import expit, logit, rel_entr

from src.common.errors import ClassificationError, SupportViolation
from src.dynamics.reduced import ConstantPayoffs, ReducedPath, SimplexState, integrate_reduced

logger = logging.getLogger(__name__)

NULL_SPACE_RCOND = 1e-10
POSITIVITY_TOL = 1e-12
IDENTITY_TOL = 1e-6
# Linear-program feasibility is only good to ~1e-7
MARGIN_TOL = 1e-7

# Flow fallback for non-unique limits
LIMIT_STEP = 1e-2
LIMIT_CHUNK = 50.0
LIMIT_MAX_TAU = 5000.0
EXTINCT_MASS_TOL = 1e-10


def time_average_path(path: ReducedPath, T: float, with_residual: bool = False):
    """
    Trapezoidal mean of the populations over [0, T].

    For constant payoffs the identity (1/T) ln(p_l(T)/p_l(0)) = (a p-bar(T))_l is checked at every
    sample inside [0, T] and a warning is logged when the largest residual exceeds 1e-6.

    Args:
        path (ReducedPath): The reduced path.
        T (float): End of the averaging interval.
        with_residual (bool): Also return the largest identity residual (None for frame-dependent
            payoffs).

    Returns:
        The averaged populations, or (average, residual) when with_residual is set.

    Raises:
        ValueError: If T is not inside (0, path end].
    """
    start, end = path.taus[0], path.taus[-1]
    if not start < T <= end * (1 + 1e-12):
        raise ValueError(f"T={T} outside the path range ({start}, {end}]")
    T = min(T, end)

    inside = path.taus <= T
    taus = path.taus[inside]
    p = path.p[inside]
    if taus[-1] < T:
        weight = (T - taus[-1]) / (path.taus[inside.sum()] - taus[-1])
        p_end = p[-1] + weight * (path.p[inside.sum()] - p[-1])
        taus = np.append(taus, T)
        p = np.vstack([p, p_end])
    average = trapezoid(p, taus, axis=0) / (T - start)

    residual = None
    if path.is_constant:
        residual = float(np.nanmax(growth_identity_residuals(path)[inside][1:], initial=0.0))
        if residual > IDENTITY_TOL:
            logger.warning("time-average identity residual %.3e above %g", residual, IDENTITY_TOL)
    if with_residual:
        return average, residual
    return average


def growth_identity_residuals(path: ReducedPath) -> np.ndarray:
    """
    |(1/T) ln(p_l(T)/p_l(0)) - sum_n a[l][n] p-bar_n(T)| at every sample and level.

    Levels that start at zero population are reported as NaN; so is T = 0.
    """
    if not path.is_constant:
        raise ValueError("the time-average identity needs a constant payoff source")
    elapsed = (path.taus - path.taus[0])[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.log(path.p / path.p[0]) / elapsed
    predicted = path.running_average @ path.source.a.T
    residuals = np.abs(growth - predicted)
    residuals[0] = np.nan
    residuals[:, path.p[0] <= 0] = np.nan
    return residuals


def phase_identity_residuals(path: ReducedPath) -> np.ndarray:
    """|phi_l(T) - phi_l(0) + T sum_n b[l][n] p-bar_n(T)| at every sample and level."""
    if not path.is_constant:
        raise ValueError("the phase identity needs a constant payoff source")
    elapsed = (path.taus - path.taus[0])[:, None]
    predicted = -elapsed * (path.running_average @ path.source.b.T)
    return np.abs(path.phi - path.phi[0] - predicted)


def _positive_in_null_space(basis: np.ndarray) -> Optional[np.ndarray]:
    d, k = basis.shape
    if k == 1:
        vector = basis[:, 0] * np.sign(basis[:, 0].sum() or 1.0)
        if np.all(vector > POSITIVITY_TOL * np.abs(vector).max()):
            return vector / vector.sum()
        return None

    # maximize t subject to basis @ y >= t and sum(basis @ y) = 1
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-basis, np.ones((d, 1))])
    a_eq = np.append(basis.sum(axis=0), 0.0)[None, :]
    bounds = [(None, None)] * k + [(None, 1.0)]
    result = linprog(cost, A_ub=a_ub, b_ub=np.zeros(d), A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not result.success or -result.fun <= POSITIVITY_TOL:
        return None
    vector = np.clip(basis @ result.x[:k], 0.0, None)
    return vector / vector.sum()


def interior_fixed_point(a) -> Optional[np.ndarray]:
    """
    Strictly positive simplex vector annihilated by the antisymmetric payoff matrix, if one exists.

    For d = 3 with a12 != 0 the closed form p ~ (a23/a12, -a13/a12, 1) is used. Otherwise the null
    space is computed by singular-value thresholding (sigma < 1e-10 sigma_max) and searched for a
    positive representative: a sign check for a one-dimensional null space, a linear program
    otherwise.

    Args:
        a: Real antisymmetric d x d payoff matrix.

    Returns:
        Optional[np.ndarray]: The fixed point, or None if the game has no interior equilibrium.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    if d == 3 and a[0, 1] != 0:
        vector = np.array([a[1, 2] / a[0, 1], -a[0, 2] / a[0, 1], 1.0])
        if np.all(vector > 0):
            return vector / vector.sum()
        return None
    if not np.any(a):
        return np.full(d, 1.0 / d)

    basis = null_space(a, rcond=NULL_SPACE_RCOND)
    if basis.shape[1] == 0:
        return None
    return _positive_in_null_space(basis)


def relative_entropy(q, p) -> float:
    """
    S[q|p] = sum_l q_l ln(q_l / p_l), with 0 ln(0/x) = 0.

    Raises:
        SupportViolation: If q_l > 0 where p_l = 0.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"distributions have different shapes {q.shape} and {p.shape}")
    if np.any((q > 0) & (p <= 0)):
        raise SupportViolation("q is not absolutely continuous with respect to p")
    return max(0.0, float(np.sum(rel_entr(q, p))))


def relative_entropy_series(q, path: ReducedPath) -> np.ndarray:
    """S[q|p(tau)] at every sample of a path."""
    q = np.asarray(q, dtype=float)
    if np.any((q[None, :] > 0) & (path.p <= 0)):
        raise SupportViolation("path leaves the support of the reference distribution")
    return np.sum(rel_entr(q[None, :], path.p), axis=1)


@dataclass(frozen=True, eq=False)
class Classification:
    """
    Long-time behaviour of a constant-payoff replicator flow.

    kind is "conservative" (interior fixed point; relative entropy to it is conserved) or
    "extinction" (relaxation to `limit`; margins are (a x)_k at the maximal-support equilibrium x,
    strictly negative on the levels that die out).
    """

    kind: str
    limit: np.ndarray
    margins: np.ndarray = field(default=None)
    extinct: tuple = ()

    @property
    def fixed_point(self) -> Optional[np.ndarray]:
        return self.limit if self.kind == "conservative" else None

    def as_dict(self) -> dict:
        report = {"kind": self.kind, "limit": [float(x) for x in self.limit]}
        if self.margins is not None:
            report["margins"] = [float(x) for x in self.margins]
            report["extinct"] = [int(k) + 1 for k in self.extinct]
        return report


def _complementary_equilibrium(a: np.ndarray) -> np.ndarray:
    """
    Equilibrium of a x <= 0 on the simplex with maximal support and maximal set of strict margins.

    The k-th linear program maximizes x_k - (a x)_k over the equilibrium polytope. The polytope is
    convex, so the mean of the d solutions is an equilibrium that is positive, or has a strictly
    negative margin, wherever any equilibrium does.
    """
    d = a.shape[0]
    solutions = []
    for k in range(d):
        result = linprog(
            a[k] - np.eye(d)[k],
            A_ub=a,
            b_ub=np.zeros(d),
            A_eq=np.ones((1, d)),
            b_eq=[1.0],
            bounds=[(0.0, None)] * d,
            method="highs",
        )
        if not result.success:
            raise ClassificationError(f"equilibrium linear program failed: {result.message}")
        solutions.append(np.clip(result.x, 0.0, None))
    equilibrium = np.mean(solutions, axis=0)
    return equilibrium / equilibrium.sum()


def _flow_limit(a: np.ndarray, p0: np.ndarray, extinct) -> np.ndarray:
    """Time average of the flow over one chunk taken after the extinct levels have emptied."""
    d = a.shape[0]
    extinct = list(extinct)
    game = ConstantPayoffs(a=a, b=np.zeros((d, d)), adiag=np.zeros(d))

    def advance(p):
        path = integrate_reduced(SimplexState(p=p), game, LIMIT_CHUNK, LIMIT_STEP)
        end = np.clip(path.p[-1], 0.0, None)
        return end / end.sum(), path

    p, tau = p0 / p0.sum(), 0.0
    while p[extinct].sum() >= EXTINCT_MASS_TOL and tau < LIMIT_MAX_TAU:
        p, _ = advance(p)
        tau += LIMIT_CHUNK
    if tau >= LIMIT_MAX_TAU:
        logger.warning("extinct levels still hold mass %.3e at tau=%g", p[extinct].sum(), tau)

    _, path = advance(p)
    average = path.running_average[-1].copy()
    average[extinct] = 0.0
    return average / average.sum()


def classify_longtime(a, p0=None) -> Classification:
    """
    Splits constant-payoff dynamics into the conservative and the extinction scenario.

    Only the levels populated in p0 take part; unpopulated levels stay at zero forever. In the
    extinction scenario the levels with a strictly negative margin at the maximal-support
    equilibrium die out. The limit is the equilibrium of the surviving levels when it is unique and
    otherwise the time average of the flow once the extinct levels have emptied, which depends on p0.

    Args:
        a: Real antisymmetric payoff matrix.
        p0: Initial populations (default: uniform).

    Returns:
        Classification: The scenario with its fixed point or limit and certificate.

    Raises:
        ClassificationError: If an equilibrium program fails or the margin certificate is violated.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    p0 = np.full(d, 1.0 / d) if p0 is None else np.asarray(p0, dtype=float)
    support = np.flatnonzero(p0 > 0)
    sub = a[np.ix_(support, support)]

    interior = interior_fixed_point(sub)
    if interior is not None:
        fixed_point = np.zeros(d)
        fixed_point[support] = interior
        logger.info("Conservative scenario, interior fixed point %s", np.round(fixed_point, 6))
        return Classification(kind="conservative", limit=fixed_point)

    # 1. Certificate from the maximal-support equilibrium
    equilibrium = np.zeros(d)
    equilibrium[support] = _complementary_equilibrium(sub)
    margins = a @ equilibrium
    tol = MARGIN_TOL * max(1.0, float(np.max(np.abs(a))))
    if np.any(margins[support] > tol):
        raise ClassificationError(f"extinction certificate failed: margins {margins}")
    dying = support[margins[support] < -tol]
    live = np.setdiff1d(support, dying)
    extinct = tuple(int(k) for k in np.setdiff1d(np.arange(d), live))

    # 2. Limit on the surviving levels
    limit = np.zeros(d)
    basis = null_space(a[np.ix_(live, live)], rcond=NULL_SPACE_RCOND) if live.size > 1 else np.ones((1, 1))
    unique = _positive_in_null_space(basis) if basis.shape[1] == 1 else None
    if unique is not None:
        limit[live] = unique
    else:
        limit = _flow_limit(a, p0, extinct)
        logger.info("Equilibria of the surviving levels are not unique; limit taken from the flow")
    logger.info("Extinction scenario, limit %s", np.round(limit, 6))
    return Classification(kind="extinction", limit=limit, margins=margins, extinct=extinct)


def _log_mix(q: float, x):
    """ln[1 + q (e^x - 1)] for 0 <= q <= 1 without overflow."""
    x = np.asarray(x, dtype=float)
    if q == 0:
        return np.zeros_like(x)
    if q == 1:
        return x.copy()
    with np.errstate(over="ignore"):
        small = np.log1p(q * np.expm1(np.clip(x, -1.0, 1.0)))
    large = np.logaddexp(np.log1p(-q), np.log(q) + x)
    return np.where(np.abs(x) < 1.0, small, large)


def two_level_closed_form(p1_0: float, a12: float, b12: float, tau):
    """
    Closed-form populations and phases of the two-level reduced dynamics.

    p1 = p1_0 e^{a tau} / (1 + p1_0 (e^{a tau} - 1)),
    phi1 = (b/a) ln[(1 - p1_0)(e^{-a tau} - 1) + 1],
    phi2 = -(b/a) ln[p1_0 (e^{a tau} - 1) + 1],
    with the a -> 0 limits phi1 = -b (1 - p1_0) tau and phi2 = -b p1_0 tau.

    Args:
        p1_0 (float): Initial population of level 1, in [0, 1].
        a12 (float): Population payoff.
        b12 (float): Phase coupling.
        tau: Slow time (scalar or array).

    Returns:
        tuple: (p1, phi1, phi2), each with the shape of tau.
    """
    if not 0.0 <= p1_0 <= 1.0:
        raise ValueError(f"p1_0 must be in [0, 1], got {p1_0}")
    tau = np.asarray(tau, dtype=float)

    if p1_0 in (0.0, 1.0):
        p1 = np.full_like(tau, p1_0)
    else:
        p1 = expit(logit(p1_0) + a12 * tau)

    if a12 == 0:
        phi1 = -b12 * (1.0 - p1_0) * tau
        phi2 = -b12 * p1_0 * tau
    else:
        phi1 = (b12 / a12) * _log_mix(1.0 - p1_0, -a12 * tau)
        phi2 = -(b12 / a12) * _log_mix(p1_0, a12 * tau)

    if tau.ndim == 0:
        return float(p1), float(phi1), float(phi2)
    return p1, phi1, phi2
