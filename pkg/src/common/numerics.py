"""
Small matrix helpers shared by the spectral, dynamics and scenario modules.
"""

import numpy as np

from src.common.errors import DimensionMismatch, NotHermitian


def as_square_matrix(value, name: str = "matrix") -> np.ndarray:
    """
    Converts the input to a complex square matrix.

    Raises:
        DimensionMismatch: If the input is not two-dimensional and square.
    """
    matrix = np.asarray(value, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {matrix.shape}")
    return matrix


def hermiticity_residual(matrix: np.ndarray) -> float:
    """Max element deviation |M - M^H|."""
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


def anti_hermiticity_residual(matrix: np.ndarray) -> float:
    """Max element deviation |M + M^H|."""
    return float(np.max(np.abs(matrix + matrix.conj().T))) if matrix.size else 0.0


def require_hermitian(matrix: np.ndarray, tol: float, name: str = "matrix") -> np.ndarray:
    """
    Checks Hermiticity to within an absolute tolerance scaled by max(1, max|M|).

    Raises:
        NotHermitian: If the check fails.
    """
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    residual = hermiticity_residual(matrix)
    if residual > tol * scale:
        raise NotHermitian(f"{name} not Hermitian (max deviation {residual:.3e})")
    return matrix


def require_same_dimension(dim: int, matrix: np.ndarray, name: str) -> None:
    if matrix.shape[0] != dim:
        raise DimensionMismatch(f"{name} has dimension {matrix.shape[0]}, expected {dim}")


def require_vector(value, dim: int, name: str = "vector", dtype=complex) -> np.ndarray:
    vector = np.asarray(value, dtype=dtype)
    if vector.ndim != 1 or vector.shape[0] != dim:
        raise DimensionMismatch(f"{name} must have length {dim}, got shape {vector.shape}")
    return vector
