"""Single qubit state reconstruction from noisy Pauli expectation values.

Linear inversion `rho = (I + x X + y Y + z Z) / 2` always has trace 1 but can have a negative eigenvalue once readout
noise pushes the Bloch vector outside the unit ball.
The bounded reconstruction shrinks the Bloch vector along its ray towards the maximally mixed state `I / 2` until the
state is physical and its separation from `I / 2` (via the overlap `Tr(rho^delta rho0^(1 - delta))`) is within the
budget `1 / (nu * alpha)`.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from information_tracker.geometry import GeometryParams

__all__ = [
    "DensityMatrix",
    "PauliExpectations",
    "simulate_measurements",
    "linear_inversion",
    "eigenvalues",
    "quantum_overlap",
    "quantum_separation",
    "shrinkage_factor",
    "bounded_reconstruction",
    "reconstruction_report",
]

logger = logging.getLogger(__name__)

#: Tolerance of all Hermiticity, trace and positivity checks
PHYSICAL_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian 2x2 matrix with unit trace. It is not required to be positive semi-definite."""

    elements: np.ndarray

    def __post_init__(self):
        elements = np.asarray(self.elements, dtype=complex)
        if elements.shape != (2, 2):
            raise ValueError("A single qubit density matrix must be 2x2, got shape {}.".format(elements.shape))
        if not np.allclose(elements, elements.conj().T, rtol=0, atol=PHYSICAL_TOL):
            raise ValueError("Density matrix is not Hermitian.")
        if abs(np.trace(elements) - 1) > PHYSICAL_TOL:
            raise ValueError("Density matrix must have unit trace, got {}.".format(np.trace(elements)))
        object.__setattr__(self, "elements", elements)

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(IDENTITY / 2)

    @classmethod
    def from_bloch(cls, bloch: np.ndarray) -> "DensityMatrix":
        x, y, z = np.asarray(bloch, dtype=float)
        return cls(0.5 * (IDENTITY + x * PAULI_X + y * PAULI_Y + z * PAULI_Z))

    def bloch_vector(self) -> np.ndarray:
        """The Pauli expectation values `(Tr(rho X), Tr(rho Y), Tr(rho Z))`."""
        return np.array([np.trace(self.elements @ p).real for p in (PAULI_X, PAULI_Y, PAULI_Z)])

    def is_physical(self) -> bool:
        return eigenvalues(self)[0] >= -PHYSICAL_TOL


@dataclass(frozen=True)
class PauliExpectations:
    """Measured expectation values of X, Y and Z and the standard deviation of the readout noise.

    The values are not restricted to [-1, 1].
    """

    x: float
    y: float
    z: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("`sigma` must be non-negative, got {}.".format(self.sigma))

    @property
    def bloch(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


def simulate_measurements(
    rho_true: DensityMatrix, sigma: float, rng_stream: np.random.Generator
) -> PauliExpectations:
    """Draw `x, y, z ~ N(Tr(rho_true S), sigma^2)` independently."""
    if not rho_true.is_physical():
        raise ValueError("The true state must be physical.")
    if sigma < 0:
        raise ValueError("`sigma` must be non-negative, got {}.".format(sigma))
    noise = rng_stream.standard_normal(3)
    x, y, z = rho_true.bloch_vector() + sigma * noise
    return PauliExpectations(float(x), float(y), float(z), sigma)


def linear_inversion(s: PauliExpectations) -> DensityMatrix:
    """Affine reconstruction `(I + x X + y Y + z Z) / 2`.

    Examples
    --------
    >>> linear_inversion(PauliExpectations(0.0, 0.0, 1.0)).elements.real
    array([[1., 0.],
           [0., 0.]])

    """
    return DensityMatrix.from_bloch(s.bloch)


def eigenvalues(rho: DensityMatrix) -> Tuple[float, float]:
    """Both eigenvalues in ascending order from the closed form of a Hermitian 2x2 matrix."""
    a, b, d = rho.elements[0, 0].real, rho.elements[0, 1], rho.elements[1, 1].real
    center = 0.5 * (a + d)
    radius = float(np.hypot(0.5 * (a - d), abs(b)))
    return center - radius, center + radius


def _matrix_power(rho: DensityMatrix, power: float) -> np.ndarray:
    values, vectors = eigh(rho.elements)
    if values[0] < -PHYSICAL_TOL:
        raise ValueError("Fractional powers are only defined for positive semi-definite states.")
    values = np.clip(values, 0, None)
    return (vectors * values**power) @ vectors.conj().T


def quantum_overlap(rho: DensityMatrix, rho0: DensityMatrix, delta: float) -> float:
    """Overlap `Tr(rho^delta rho0^(1 - delta))` of two physical states. 1 if and only if they are equal."""
    if not 0 < delta < 1:
        raise ValueError("`delta` must be in the open interval (0, 1), got {}.".format(delta))
    return float(np.trace(_matrix_power(rho, delta) @ _matrix_power(rho0, 1 - delta)).real)


def quantum_separation(rho: DensityMatrix, rho0: DensityMatrix, delta: float) -> float:
    """Separation `(1 - A) / (delta * (1 - delta))` based on `quantum_overlap`."""
    return (1.0 - quantum_overlap(rho, rho0, delta)) / (delta * (1 - delta))


def _ray_separation(bloch: np.ndarray, t: float, delta: float) -> float:
    return quantum_separation(DensityMatrix.from_bloch(t * bloch), DensityMatrix.maximally_mixed(), delta)


def shrinkage_factor(s: PauliExpectations, params: GeometryParams) -> float:
    """Largest `t` in [0, 1] so that `t * r` is physical and within the separation budget of `I / 2`.

    The separation grows monotonically along the ray, so the boundary crossing is found by root finding.
    """
    bloch = s.bloch
    norm = float(np.linalg.norm(bloch))
    if norm == 0:
        return 1.0
    t_physical = min(1.0, 1.0 / norm)
    budget = params.separation_budget()
    if _ray_separation(bloch, t_physical, params.delta) <= budget:
        return t_physical
    return float(
        brentq(lambda t: _ray_separation(bloch, t, params.delta) - budget, 0.0, t_physical, xtol=1e-14, rtol=1e-14)
    )


def bounded_reconstruction(s: PauliExpectations, params: GeometryParams) -> DensityMatrix:
    """Reconstruction anchored to the maximally mixed state.

    Returns `linear_inversion(s)` itself, if it is physical and within the budget.
    Otherwise the Bloch vector is shrunk towards 0 (see `shrinkage_factor`), which always gives a physical state.
    """
    raw = linear_inversion(s)
    if raw.is_physical() and np.linalg.norm(s.bloch) <= 1:
        if quantum_separation(raw, DensityMatrix.maximally_mixed(), params.delta) <= params.separation_budget():
            return raw
    t = shrinkage_factor(s, params)
    logger.debug("Shrinking the Bloch vector by %.6f.", t)
    return DensityMatrix.from_bloch(t * s.bloch)


def _complex_to_json(mat: np.ndarray) -> dict:
    return {"real": mat.real.tolist(), "imag": mat.imag.tolist()}


def reconstruction_report(
    s: PauliExpectations, params: GeometryParams, seed: Optional[int] = None
) -> dict:
    """JSON compatible summary of both reconstructions.

    Complex matrices are stored as `{"real": [[...]], "imag": [[...]]}`.
    """
    rho_mle = linear_inversion(s)
    rho_bounded = bounded_reconstruction(s, params)
    report = {
        "input": {
            "x": s.x,
            "y": s.y,
            "z": s.z,
            "sigma": s.sigma,
            "seed": seed,
            "delta": params.delta,
            "nu": params.nu,
            "alpha": params.alpha,
        },
        "rho_mle": _complex_to_json(rho_mle.elements),
        "rho_bounded": _complex_to_json(rho_bounded.elements),
        "eigenvalues_mle": list(eigenvalues(rho_mle)),
        "eigenvalues_bounded": list(eigenvalues(rho_bounded)),
    }
    return report
