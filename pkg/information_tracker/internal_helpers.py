"""Linear algebra helpers shared by the geometry, tracker and tomography modules.

All covariance handling in this package goes through these helpers, so that symmetric/positive-definite checks and
their error messages are identical everywhere.
"""
from typing import Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

#: Relative tolerance used for all symmetry checks
SYMMETRY_RTOL = 1e-9


def as_matrix(value, name: str) -> np.ndarray:
    """Convert to a square 2D float array or raise a ValueError naming the quantity."""
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("`{}` must be a square matrix, got shape {}.".format(name, mat.shape))
    return mat


def is_symmetric(mat: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    """Check symmetry relative to the largest absolute entry of the matrix."""
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    return bool(np.all(np.abs(mat - mat.T) <= rtol * scale))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def is_psd(mat: np.ndarray, atol: float = 1e-12) -> bool:
    """Check that a symmetric matrix has no eigenvalue below `-atol` (scaled by the matrix magnitude)."""
    if mat.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(mat))))
    return bool(np.min(eigh(symmetrize(mat), eigvals_only=True)) >= -atol * scale)


def cholesky_factor(mat: np.ndarray, name: str = "covariance") -> Tuple[np.ndarray, bool]:
    """Cholesky factorize a positive definite matrix.

    Returns the `scipy.linalg.cho_factor` tuple.
    A failed factorization is reported as ValueError, no regularization is attempted.
    """
    try:
        return cho_factor(mat, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ValueError("`{}` is not positive definite (Cholesky factorization failed).".format(name)) from e


def log_det(factor: Tuple[np.ndarray, bool]) -> float:
    """Log-determinant from a `cho_factor` result."""
    return 2.0 * float(np.sum(np.log(np.diag(factor[0]))))


def inverse(factor: Tuple[np.ndarray, bool]) -> np.ndarray:
    """Inverse of a positive definite matrix from its `cho_factor` result."""
    return symmetrize(cho_solve(factor, np.eye(factor[0].shape[0])))


def mahalanobis_sq(diff: np.ndarray, precision: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance for each row of `diff`.

    Evaluated with element-wise operations only, so the value of one row never depends on how many other rows are
    present.

    Parameters
    ----------
    diff : array with shape (n, m)
        Row-wise deviations from the mean
    precision : array with shape (m, m)
        Inverse covariance

    Examples
    --------
    >>> mahalanobis_sq(np.array([[1.0, 0.0], [0.0, 2.0]]), np.eye(2) / 2)
    array([0.5, 2. ])

    """
    dist = np.zeros(diff.shape[0])
    for j in range(diff.shape[1]):
        for k in range(diff.shape[1]):
            dist += diff[:, j] * precision[j, k] * diff[:, k]
    return dist


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix (tiny negative eigenvalues are clipped)."""
    eigvals, eigvecs = eigh(symmetrize(mat))
    return (eigvecs * np.sqrt(np.clip(eigvals, 0, None))) @ eigvecs.T
