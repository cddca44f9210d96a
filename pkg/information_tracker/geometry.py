"""Delta information separation between densities and the truncation boundary of the probability droplet.

For two densities `f` and `f0` the delta information separation is

.. math:: I_\\delta(f : f_0) = \\frac{1}{\\delta(1-\\delta)} \\int \\delta f + (1-\\delta) f_0 - f^\\delta f_0^{1-\\delta} d\\mu

For normalized densities this reduces to `(1 - A) / (delta * (1 - delta))` with the generalized overlap
`A = int f^delta f0^(1 - delta)`, which has a closed form for two Gaussians (`gaussian_overlap`).
`separation_quadrature` evaluates the integral numerically and serves as independent oracle for the closed form.

The droplet prior `[1 - nu * alpha * I]^(1 / nu)` has compact support: every state whose separation from the
reference exceeds the budget `1 / (nu * alpha)` has exactly zero mass.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from information_tracker.internal_helpers import (
    as_matrix,
    cholesky_factor,
    inverse,
    is_symmetric,
    log_det,
)

__all__ = [
    "GaussianState",
    "GeometryParams",
    "GridDensity",
    "gaussian_overlap",
    "delta_separation",
    "separation_quadrature",
    "overlap_from_separation",
    "droplet_density",
    "within_boundary",
    "overlap_threshold",
]

logger = logging.getLogger(__name__)

#: Tolerance for the normalization of a `GridDensity`
NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class GaussianState:
    """A multivariate normal belief `N(mean, cov)`.

    The covariance must be symmetric (relative tolerance 1e-9) and positive definite.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError("`mean` must be a vector, got shape {}.".format(mean.shape))
        cov = as_matrix(self.cov, "cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(
                "Mean of length {} does not match covariance of dimension {}.".format(mean.shape[0], cov.shape[0])
            )
        if not is_symmetric(cov):
            raise ValueError("`cov` must be symmetric.")
        cholesky_factor(cov, "cov")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class GeometryParams:
    """Parameters of the separation (`delta`) and of the droplet prior (`nu`, `alpha`).

    Parameters
    ----------
    delta
        Separation order in the open interval (0, 1).
        The endpoints are excluded, as the prefactor `1 / (delta * (1 - delta))` is singular there.
    nu
        Droplet deformation in (0, 1]. `nu -> 0` recovers the exponential prior `exp(-alpha * I)`.
    alpha
        Strength of the separation constraint, > 0.

    """

    delta: float = 0.5
    nu: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("`delta` must be in the open interval (0, 1), got {}.".format(self.delta))
        if not 0 < self.nu <= 1:
            raise ValueError("`nu` must be in the interval (0, 1], got {}.".format(self.nu))
        if not self.alpha > 0 or not np.isfinite(self.alpha):
            raise ValueError("`alpha` must be a finite positive number, got {}.".format(self.alpha))

    def separation_budget(self) -> float:
        """The largest separation with non-zero droplet mass, `1 / (nu * alpha)`."""
        return 1.0 / (self.nu * self.alpha)


@dataclass(frozen=True)
class GridDensity:
    """A 1D density sampled on a uniformly spaced grid.

    Values must be non-negative and integrate (trapezoidal rule) to 1 within 1e-6.
    """

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if support.ndim != 1 or support.shape != values.shape:
            raise ValueError("`support` and `values` must be 1D arrays of equal length.")
        if len(support) < 2:
            raise ValueError("A grid density needs at least two grid points.")
        steps = np.diff(support)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
            raise ValueError("`support` must be a uniformly spaced, increasing grid.")
        if np.any(values < 0):
            raise ValueError("Density values must be non-negative.")
        total = trapezoid(values, support)
        if abs(total - 1) > NORMALIZATION_TOL:
            raise ValueError("Density is not normalized: integral over the support is {}.".format(total))
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def gaussian(cls, mean: float, std: float, support: np.ndarray) -> "GridDensity":
        """Discretize `N(mean, std**2)` on `support`."""
        support = np.asarray(support, dtype=float)
        values = np.exp(-0.5 * ((support - mean) / std) ** 2) / (std * np.sqrt(2 * np.pi))
        return cls(support, values)


def _check_pair(p: GaussianState, p0: GaussianState, delta: float):
    if p.dim != p0.dim:
        raise ValueError("Dimension mismatch: {} vs {}.".format(p.dim, p0.dim))
    if not 0 < delta < 1:
        raise ValueError("`delta` must be in the open interval (0, 1), got {}.".format(delta))


def gaussian_overlap(p: GaussianState, p0: GaussianState, delta: float) -> float:
    """Generalized overlap `A(delta) = int p^delta p0^(1 - delta)` of two Gaussians in closed form.

    .. math:: A = \\frac{|\\Sigma|^{(1-\\delta)/2} |\\Sigma_0|^{\\delta/2}}{|\\Sigma_\\delta|^{1/2}}
              \\exp(-\\tfrac{1}{2}\\delta(1-\\delta)(\\mu-\\mu_0)^T\\Sigma_\\delta^{-1}(\\mu-\\mu_0))

    with the mixture covariance `Sigma_delta = delta * Sigma0 + (1 - delta) * Sigma`.
    Determinants and the quadratic form are evaluated via Cholesky factors.

    Returns a value in (0, 1]; exactly 1.0 if both distributions are identical.
    """
    _check_pair(p, p0, delta)
    if np.array_equal(p.mean, p0.mean) and np.array_equal(p.cov, p0.cov):
        return 1.0
    mixture = delta * p0.cov + (1 - delta) * p.cov
    mixture_factor = cholesky_factor(mixture, "mixture covariance")
    diff = p.mean - p0.mean
    quad = float(diff @ inverse(mixture_factor) @ diff)
    log_overlap = (
        0.5 * (1 - delta) * log_det(cholesky_factor(p.cov, "p.cov"))
        + 0.5 * delta * log_det(cholesky_factor(p0.cov, "p0.cov"))
        - 0.5 * log_det(mixture_factor)
        - 0.5 * delta * (1 - delta) * quad
    )
    # The log-overlap is <= 0 analytically, rounding must not push A above 1
    return float(np.exp(min(log_overlap, 0.0)))


def delta_separation(p: GaussianState, p0: GaussianState, delta: float) -> float:
    """Delta information separation `I = (1 - A) / (delta * (1 - delta))` of two Gaussians."""
    return (1.0 - gaussian_overlap(p, p0, delta)) / (delta * (1 - delta))


def separation_quadrature(f: GridDensity, f0: GridDensity, delta: float) -> float:
    """Evaluate the separation integral for two grid densities with the trapezoidal rule.

    This does not rely on any closed form and is used to verify `delta_separation`.
    The grid should extend far enough into the tails of both densities (8 standard deviations past both means are
    enough for Gaussians).
    """
    if not 0 < delta < 1:
        raise ValueError("`delta` must be in the open interval (0, 1), got {}.".format(delta))
    if f.support.shape != f0.support.shape or not np.array_equal(f.support, f0.support):
        raise ValueError("Both densities must be sampled on the same grid.")
    if np.array_equal(f.values, f0.values):
        return 0.0
    integrand = delta * f.values + (1 - delta) * f0.values - f.values**delta * f0.values ** (1 - delta)
    return float(trapezoid(integrand, f.support) / (delta * (1 - delta)))


def overlap_from_separation(i_delta: float, delta: float) -> float:
    """Invert the overlap/separation relation: `A = 1 - delta * (1 - delta) * I`."""
    return 1.0 - delta * (1 - delta) * i_delta


def droplet_density(i_delta: float, params: GeometryParams) -> float:
    """Unnormalized droplet prior `max(0, 1 - nu * alpha * I)^(1 / nu)`.

    The partition constant is never computed, all consumers renormalize their weights.
    Identically 0 at and beyond the separation budget.
    """
    if i_delta < 0:
        raise ValueError("The separation must be non-negative, got {}.".format(i_delta))
    base = 1.0 - params.nu * params.alpha * i_delta
    if base <= 0:
        return 0.0
    return float(base ** (1.0 / params.nu))


def within_boundary(i_delta: float, params: GeometryParams) -> bool:
    """Check `1 - nu * alpha * I >= 0`.

    Points exactly on the boundary count as inside (with zero droplet density).
    """
    if i_delta < 0:
        raise ValueError("The separation must be non-negative, got {}.".format(i_delta))
    return bool(i_delta <= params.separation_budget())


def overlap_threshold(params: GeometryParams) -> float:
    """Smallest overlap that is still inside the droplet, `1 - delta * (1 - delta) / (nu * alpha)`.

    Clamped at 0: if `delta * (1 - delta) >= nu * alpha` no overlap can violate the boundary.
    """
    return max(0.0, 1.0 - params.delta * (1 - params.delta) / (params.nu * params.alpha))
