"""
Shared fixtures: Pauli matrices, the shipped scenario directory and small helper models.
Living at the repository root also puts `src` on the import path.
"""

from pathlib import Path

import numpy as np
import pytest

from src.scenarios.loader import load_scenario
from src.scenarios.models import linear_model

ROOT = Path(__file__).resolve().parent
SCENARIO_DIR = ROOT / "scenarios"

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@pytest.fixture
def sigma():
    return {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def scenario():
    """Loads a shipped scenario by name, with optional overrides."""

    def _load(name: str, *overrides: str):
        return load_scenario(str(SCENARIO_DIR / f"{name}.scn"), list(overrides))

    return _load


@pytest.fixture
def two_level_model():
    """H = sigma_x/2 + R sigma_z/2: gap sqrt(1 + R^2), real eigenvectors."""
    return linear_model(SIGMA_X / 2, SIGMA_Z / 2)


@pytest.fixture
def berry_model():
    """H = (sigma_z + sigma_x)/2 + R sigma_y/2: complex eigenvectors with a non-zero Berry connection."""
    return linear_model((SIGMA_Z + SIGMA_X) / 2, SIGMA_Y / 2)


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (x + x.conj().T) / 2


def random_anti_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (x - x.conj().T) / 2


def random_antisymmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    x = rng.normal(size=(d, d))
    upper = np.triu(x, k=1)
    return upper - upper.T


def random_gapped_model(rng: np.random.Generator, d: int):
    """Well separated levels (spacing about 2) with a random Hermitian perturbation and slope."""
    h0 = np.diag(2.0 * np.arange(d)).astype(complex) + random_hermitian(rng, d, 0.2)
    v = random_hermitian(rng, d, 0.3)
    return linear_model(h0, v)


def random_simplex(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.dirichlet(np.ones(d))
