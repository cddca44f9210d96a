"""The three-phase Information Tracker and the unconstrained Gaussian MAP baseline.

One tracking step consists of

1. Kinematic prediction `N(F mu, F Sigma F^T + Q)`.
2. Manifold projection: a fixed-point iteration that weights every point of the cloud by its overlap
   `A_i = exp(-0.5 * delta * (1 - delta) * D_i)` with the current spatial belief (`D_i` is the squared Mahalanobis
   distance) and sets the weight of every point below `overlap_threshold` to exactly zero.
   The weighted mean/scatter of the remaining points (plus the covariance floor `r_min`) becomes the new spatial
   belief.
   If no point remains, the droplet is empty and the predicted prior is kept.
3. Precision update: a gain update of the predicted state, using the projected spatial belief as pseudo
   measurement.

The baseline (`baseline_map_step`) treats every point of the cloud with the same Euclidean L2 penalty, i.e. a Kalman
update against the centroid of all points.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve
from tpcp import Algorithm, make_action_safe

from information_tracker.geometry import GaussianState, GeometryParams, overlap_threshold
from information_tracker.internal_helpers import (
    as_matrix,
    cholesky_factor,
    inverse,
    is_psd,
    is_symmetric,
    mahalanobis_sq,
    symmetrize,
)

__all__ = [
    "KinematicModel",
    "TrackerConfig",
    "PointCloud",
    "ProjectionResult",
    "constant_velocity_model",
    "predict",
    "spatial_marginal",
    "project_manifold",
    "precision_update",
    "step",
    "baseline_map_step",
    "InformationTracker",
    "GaussianMapTracker",
]

logger = logging.getLogger(__name__)

#: Unnormalized weight sums below this value count as an empty droplet
EMPTY_WEIGHT_SUM = 1e-12


@dataclass(frozen=True)
class KinematicModel:
    """Linear Gaussian motion and observation model.

    Parameters
    ----------
    f_matrix
        State transition (n x n)
    q_matrix
        Process noise covariance (n x n, symmetric PSD)
    h_matrix
        Observation matrix (m x n) with full row rank, selecting the spatial components of the state
    dt
        Time step in seconds

    """

    f_matrix: np.ndarray
    q_matrix: np.ndarray
    h_matrix: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        f_matrix = as_matrix(self.f_matrix, "f_matrix")
        q_matrix = as_matrix(self.q_matrix, "q_matrix")
        h_matrix = np.atleast_2d(np.asarray(self.h_matrix, dtype=float))
        n = f_matrix.shape[0]
        if q_matrix.shape != (n, n):
            raise ValueError("`q_matrix` must have shape {}, got {}.".format((n, n), q_matrix.shape))
        if h_matrix.ndim != 2 or h_matrix.shape[1] != n or h_matrix.shape[0] > n:
            raise ValueError("`h_matrix` must have shape (m, {}) with m <= {}, got {}.".format(n, n, h_matrix.shape))
        if not is_symmetric(q_matrix) or not is_psd(q_matrix):
            raise ValueError("`q_matrix` must be symmetric positive semi-definite.")
        if np.linalg.matrix_rank(h_matrix) != h_matrix.shape[0]:
            raise ValueError("`h_matrix` must have full row rank.")
        object.__setattr__(self, "f_matrix", f_matrix)
        object.__setattr__(self, "q_matrix", q_matrix)
        object.__setattr__(self, "h_matrix", h_matrix)

    @property
    def state_dim(self) -> int:
        return self.f_matrix.shape[0]

    @property
    def spatial_dim(self) -> int:
        return self.h_matrix.shape[0]


def constant_velocity_model(n_axes: int, dt: float = 1.0, intensity: float = 0.5) -> KinematicModel:
    """Continuous white noise acceleration model for `n_axes` independent axes.

    The state is ordered `[positions, velocities]` and only the positions are observed.
    The process noise of each axis is `intensity * [[dt^3 / 3, dt^2 / 2], [dt^2 / 2, dt]]` (intensity in m^2/s^3).

    Examples
    --------
    >>> model = constant_velocity_model(1, dt=1.0, intensity=0.0)
    >>> model.f_matrix
    array([[1., 1.],
           [0., 1.]])

    """
    if n_axes < 1:
        raise ValueError("`n_axes` must be at least 1.")
    if intensity < 0:
        raise ValueError("The process noise intensity must be non-negative.")
    eye = np.eye(n_axes)
    zero = np.zeros((n_axes, n_axes))
    f_matrix = np.block([[eye, dt * eye], [zero, eye]])
    q_matrix = intensity * np.block([[dt**3 / 3 * eye, dt**2 / 2 * eye], [dt**2 / 2 * eye, dt * eye]])
    h_matrix = np.hstack([eye, zero])
    return KinematicModel(f_matrix, q_matrix, h_matrix, dt)


def _default_r_min() -> np.ndarray:
    return 0.25 * np.eye(3)


@dataclass(frozen=True)
class TrackerConfig:
    """Settings of the manifold projection.

    Parameters
    ----------
    geometry
        Separation and droplet parameters
    r_min
        Covariance floor added to the projected scatter in every iteration (m x m, PSD).
        Defaults to `0.25 * I` (a 0.5 m standard deviation) in 3D.
    max_iterations
        Upper bound for the fixed-point iteration
    convergence_tol
        The iteration stops once the mean moves less than this (Euclidean norm)

    """

    geometry: GeometryParams = field(default_factory=GeometryParams)
    r_min: np.ndarray = field(default_factory=_default_r_min)
    max_iterations: int = 50
    convergence_tol: float = 1e-6

    def __post_init__(self):
        r_min = as_matrix(self.r_min, "r_min")
        if not is_symmetric(r_min) or not is_psd(r_min):
            raise ValueError("`r_min` must be symmetric positive semi-definite.")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("`max_iterations` must be a positive integer, got {}.".format(self.max_iterations))
        if not self.convergence_tol > 0:
            raise ValueError("`convergence_tol` must be positive, got {}.".format(self.convergence_tol))
        object.__setattr__(self, "r_min", r_min)


@dataclass(frozen=True)
class PointCloud:
    """A frame of spatial measurements with shape (n_points, m). May be empty."""

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2:
            raise ValueError("`points` must have shape (n_points, m), got {}.".format(points.shape))
        object.__setattr__(self, "points", points)

    @classmethod
    def empty(cls, dim: int) -> "PointCloud":
        return cls(np.empty((0, dim)))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of the manifold projection.

    `weights` are normalized to sum to 1 and aligned with the input points; truncated points have weight exactly 0.
    If `droplet_empty` is True, `mean`/`cov` are the unchanged spatial prior and all weights are 0.
    """

    mean: np.ndarray
    cov: np.ndarray
    weights: np.ndarray
    droplet_empty: bool
    iterations_used: int


def predict(state: GaussianState, model: KinematicModel) -> GaussianState:
    """Kinematic prediction `N(F mu, F Sigma F^T + Q)`."""
    if state.dim != model.state_dim:
        raise ValueError("State of dimension {} does not match model of dimension {}.".format(state.dim, model.state_dim))
    f_matrix = model.f_matrix
    return GaussianState(f_matrix @ state.mean, symmetrize(f_matrix @ state.cov @ f_matrix.T + model.q_matrix))


def spatial_marginal(state: GaussianState, model: KinematicModel) -> GaussianState:
    """The belief over the observed components, `N(H mu, H Sigma H^T)`."""
    h_matrix = model.h_matrix
    return GaussianState(h_matrix @ state.mean, symmetrize(h_matrix @ state.cov @ h_matrix.T))


def _point_weights(points: np.ndarray, mean: np.ndarray, cov: np.ndarray, delta: float, threshold: float) -> np.ndarray:
    precision = inverse(cholesky_factor(cov, "spatial covariance"))
    distance = mahalanobis_sq(points - mean, precision)
    overlap = np.exp(-0.5 * delta * (1 - delta) * distance)
    return np.where(overlap >= threshold, overlap, 0.0)


def project_manifold(spatial_prior: GaussianState, cloud: PointCloud, config: TrackerConfig) -> ProjectionResult:
    """Fixed-point projection of the spatial belief onto the density ridge of the cloud.

    Only points with non-zero weight enter the weighted mean and scatter, so appending truncated points to a cloud
    leaves the result bit-identical.

    Parameters
    ----------
    spatial_prior
        The predicted belief over the observed components (positive definite covariance)
    cloud
        The measurements of the current frame
    config
        Projection settings

    Returns
    -------
    result
        The projected spatial belief. The weights are the ones of the final iteration.

    """
    if len(cloud) and cloud.dim != spatial_prior.dim:
        raise ValueError("Cloud of dimension {} does not match prior of dimension {}.".format(cloud.dim, spatial_prior.dim))
    if config.r_min.shape[0] != spatial_prior.dim:
        raise ValueError("`r_min` does not match the spatial dimension {}.".format(spatial_prior.dim))

    empty = ProjectionResult(
        spatial_prior.mean, spatial_prior.cov, np.zeros(len(cloud)), droplet_empty=True, iterations_used=0
    )
    if len(cloud) == 0:
        return empty

    delta = config.geometry.delta
    threshold = overlap_threshold(config.geometry)
    points = cloud.points
    mean, cov = spatial_prior.mean, spatial_prior.cov
    for iteration in range(1, config.max_iterations + 1):
        weights = _point_weights(points, mean, cov, delta, threshold)
        kept = weights > 0
        kept_weights = weights[kept]
        total = kept_weights.sum()
        if total < EMPTY_WEIGHT_SUM:
            logger.debug("Droplet empty after %d iteration(s), keeping the prior.", iteration)
            return ProjectionResult(
                spatial_prior.mean, spatial_prior.cov, np.zeros(len(cloud)), droplet_empty=True, iterations_used=iteration
            )
        kept_points = points[kept]
        new_mean = kept_weights @ kept_points / total
        diff = kept_points - new_mean
        new_cov = symmetrize((kept_weights[:, None] * diff).T @ diff / total + config.r_min)
        shift = np.linalg.norm(new_mean - mean)
        mean, cov = new_mean, new_cov
        if shift < config.convergence_tol:
            break
    else:
        logger.debug("Projection stopped after %d iterations without converging.", config.max_iterations)
    return ProjectionResult(mean, cov, weights / total, droplet_empty=False, iterations_used=iteration)


def _gain_update(
    prior: GaussianState, h_matrix: np.ndarray, measurement: np.ndarray, measurement_cov: np.ndarray
) -> GaussianState:
    """Kalman gain update of `prior` against `measurement ~ N(H x, measurement_cov)`."""
    ph_t = prior.cov @ h_matrix.T
    innovation_cov = symmetrize(h_matrix @ ph_t + measurement_cov)
    try:
        gain = solve(innovation_cov, ph_t.T, assume_a="pos").T
    except np.linalg.LinAlgError as e:
        raise ValueError("The innovation covariance is singular.") from e
    mean = prior.mean + gain @ (measurement - h_matrix @ prior.mean)
    cov = (np.eye(prior.dim) - gain @ h_matrix) @ prior.cov
    return GaussianState(mean, symmetrize(cov))


def precision_update(prior6: GaussianState, projection: ProjectionResult, model: KinematicModel) -> GaussianState:
    """Correct the predicted state with the projected spatial belief as pseudo measurement.

    `K = Sigma0 H^T (H Sigma0 H^T + Sigma_k)^-1`, `mu = mu0 + K (mu_k - H mu0)`, `Sigma = (I - K H) Sigma0`.
    Cross-covariances between positions and velocities carry the correction to the velocity components.
    """
    if projection.droplet_empty:
        raise ValueError("An empty droplet carries no information, keep the prior instead.")
    return _gain_update(prior6, model.h_matrix, projection.mean, projection.cov)


def step(
    state: GaussianState, cloud: PointCloud, model: KinematicModel, config: TrackerConfig
) -> Tuple[GaussianState, ProjectionResult]:
    """One full tracking step: predict, project the spatial marginal and update.

    If the droplet is empty, the predicted prior is the posterior.
    Over consecutive empty frames the covariance therefore keeps growing with Q, until the droplet is large enough to
    include the measurements again.
    """
    predicted = predict(state, model)
    projection = project_manifold(spatial_marginal(predicted, model), cloud, config)
    if projection.droplet_empty:
        return predicted, projection
    return precision_update(predicted, projection, model), projection


def baseline_map_step(state: GaussianState, cloud: PointCloud, model: KinematicModel, r_meas) -> GaussianState:
    """Unconstrained Gaussian MAP step.

    Every point is an independent measurement with covariance `r_meas`, which is equivalent to a single update against
    the centroid of the cloud with covariance `r_meas / n_points`.
    No point is ever down-weighted.
    An empty cloud returns the predicted prior.
    """
    predicted = predict(state, model)
    if len(cloud) == 0:
        return predicted
    if cloud.dim != model.spatial_dim:
        raise ValueError("Cloud of dimension {} does not match the model ({}).".format(cloud.dim, model.spatial_dim))
    r_meas = as_matrix(r_meas, "r_meas")
    centroid = cloud.points.mean(axis=0)
    return _gain_update(predicted, model.h_matrix, centroid, r_meas / len(cloud))


class InformationTracker(Algorithm):
    """Run the Information Tracker over a sequence of point clouds.

    Parameters
    ----------
    model
        Motion and observation model
    config
        Projection settings

    Attributes
    ----------
    states_
        Posterior after every frame
    projections_
        Projection result of every frame
    droplet_empty_
        Per frame flag, True if all points of the frame were truncated

    """

    _action_methods = ("track",)

    model: KinematicModel
    config: TrackerConfig

    states_: List[GaussianState]
    projections_: List[ProjectionResult]
    droplet_empty_: np.ndarray

    def __init__(self, model: KinematicModel, config: Optional[TrackerConfig] = None):
        self.model = model
        self.config = config

    @make_action_safe
    def track(self, initial_state: GaussianState, clouds: Sequence[PointCloud]):
        config = self.config or TrackerConfig()
        state = initial_state
        states = []
        projections = []
        for cloud in clouds:
            state, projection = step(state, cloud, self.model, config)
            states.append(state)
            projections.append(projection)
        self.states_ = states
        self.projections_ = projections
        self.droplet_empty_ = np.array([p.droplet_empty for p in projections], dtype=bool)
        return self

    @property
    def means_(self) -> np.ndarray:
        """Posterior means with shape (n_frames, n)."""
        return np.array([s.mean for s in self.states_]).reshape(len(self.states_), self.model.state_dim)


class GaussianMapTracker(Algorithm):
    """Run the unconstrained Gaussian MAP baseline over a sequence of point clouds.

    Parameters
    ----------
    model
        Motion and observation model
    r_meas
        Measurement covariance of a single point

    """

    _action_methods = ("track",)

    model: KinematicModel
    r_meas: np.ndarray

    states_: List[GaussianState]

    def __init__(self, model: KinematicModel, r_meas: np.ndarray):
        self.model = model
        self.r_meas = r_meas

    @make_action_safe
    def track(self, initial_state: GaussianState, clouds: Sequence[PointCloud]):
        state = initial_state
        states = []
        for cloud in clouds:
            state = baseline_map_step(state, cloud, self.model, self.r_meas)
            states.append(state)
        self.states_ = states
        return self

    @property
    def means_(self) -> np.ndarray:
        """Posterior means with shape (n_frames, n)."""
        return np.array([s.mean for s in self.states_]).reshape(len(self.states_), self.model.state_dim)
