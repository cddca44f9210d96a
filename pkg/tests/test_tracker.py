import numpy as np
import pytest

from information_tracker.geometry import GaussianState, GeometryParams
from information_tracker.tracker import (
    GaussianMapTracker,
    InformationTracker,
    KinematicModel,
    PointCloud,
    ProjectionResult,
    TrackerConfig,
    baseline_map_step,
    constant_velocity_model,
    precision_update,
    predict,
    project_manifold,
    spatial_marginal,
    step,
)


@pytest.fixture
def model():
    return constant_velocity_model(3, dt=1.0, intensity=0.5)


@pytest.fixture
def prior():
    return GaussianState(np.zeros(6), np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 1.0]))


@pytest.fixture
def spatial_prior():
    return GaussianState(np.zeros(3), np.eye(3))


def test_constant_velocity_model():
    model = constant_velocity_model(2, dt=0.5, intensity=2.0)

    assert model.state_dim == 4
    assert model.spatial_dim == 2
    np.testing.assert_array_equal(model.h_matrix, [[1, 0, 0, 0], [0, 1, 0, 0]])
    np.testing.assert_allclose(model.f_matrix[:2, 2:], 0.5 * np.eye(2))
    np.testing.assert_allclose(model.q_matrix[0, 0], 2.0 * 0.5**3 / 3)
    np.testing.assert_allclose(model.q_matrix[0, 2], 2.0 * 0.5**2 / 2)
    np.testing.assert_allclose(model.q_matrix[2, 2], 2.0 * 0.5)
    assert model.q_matrix[0, 1] == 0


def test_predict(model, prior):
    state = GaussianState(np.array([0.0, 0.0, 0.0, 10.0, 1.0, 0.0]), prior.cov)
    predicted = predict(state, model)

    np.testing.assert_allclose(predicted.mean, [10.0, 1.0, 0.0, 10.0, 1.0, 0.0])
    np.testing.assert_allclose(predicted.cov, model.f_matrix @ prior.cov @ model.f_matrix.T + model.q_matrix)
    np.testing.assert_array_equal(predicted.cov, predicted.cov.T)


def test_predict_dimension_mismatch(model):
    with pytest.raises(ValueError, match="does not match"):
        predict(GaussianState(np.zeros(2), np.eye(2)), model)


def test_projection_of_empty_cloud(spatial_prior):
    result = project_manifold(spatial_prior, PointCloud.empty(3), TrackerConfig())

    assert result.droplet_empty
    assert result.iterations_used == 0
    assert len(result.weights) == 0
    np.testing.assert_array_equal(result.mean, spatial_prior.mean)


def test_projection_all_points_outside(spatial_prior):
    cloud = PointCloud(np.array([[40.0, 0.0, 0.0], [0.0, -35.0, 0.0], [20.0, 20.0, 20.0]]))
    result = project_manifold(spatial_prior, cloud, TrackerConfig())

    assert result.droplet_empty
    assert result.iterations_used == 1
    np.testing.assert_array_equal(result.weights, np.zeros(3))
    np.testing.assert_array_equal(result.mean, spatial_prior.mean)
    np.testing.assert_array_equal(result.cov, spatial_prior.cov)


def test_projection_single_point_at_mean():
    config = TrackerConfig(r_min=0.1 * np.eye(3))
    point = np.array([1.0, 2.0, 3.0])
    result = project_manifold(GaussianState(point, np.eye(3)), PointCloud(point[None, :]), config)

    assert not result.droplet_empty
    np.testing.assert_array_equal(result.mean, point)
    np.testing.assert_allclose(result.cov, config.r_min)
    np.testing.assert_array_equal(result.weights, [1.0])


def test_projection_weights(rng, spatial_prior):
    valid = rng.normal(size=(50, 3))
    ghosts = rng.normal(size=(10, 3)) + [0.0, 40.0, 0.0]
    result = project_manifold(spatial_prior, PointCloud(np.vstack([valid, ghosts])), TrackerConfig())

    assert not result.droplet_empty
    assert result.weights.sum() == pytest.approx(1.0)
    assert np.all(result.weights >= 0)
    np.testing.assert_array_equal(result.weights[50:], 0.0)
    assert np.linalg.norm(result.mean) < 1.0
    assert 1 <= result.iterations_used <= 50


def test_projection_ignores_truncated_points(rng, spatial_prior):
    valid = rng.normal(size=(50, 3))
    config = TrackerConfig()
    clean = project_manifold(spatial_prior, PointCloud(valid), config)

    for n_ghost in (5, 50, 500):
        ghosts = rng.normal(size=(n_ghost, 3)) + [0.0, 40.0, 0.0]
        contaminated = project_manifold(spatial_prior, PointCloud(np.vstack([valid, ghosts])), config)

        np.testing.assert_array_equal(contaminated.mean, clean.mean)
        np.testing.assert_array_equal(contaminated.cov, clean.cov)
        np.testing.assert_array_equal(contaminated.weights[:50], clean.weights)
        assert contaminated.iterations_used == clean.iterations_used


def test_projection_respects_iteration_limit(rng, spatial_prior):
    config = TrackerConfig(max_iterations=1)
    result = project_manifold(spatial_prior, PointCloud(rng.normal(size=(20, 3)) + 0.5), config)

    assert result.iterations_used == 1


def test_precision_update_rejects_empty_droplet(model, prior, spatial_prior):
    projection = project_manifold(spatial_prior, PointCloud.empty(3), TrackerConfig())
    with pytest.raises(ValueError, match="empty droplet"):
        precision_update(prior, projection, model)


def test_precision_update_corrects_velocity(model, prior):
    predicted = predict(prior, model)
    cloud = PointCloud(np.array([[1.5, 0.0, 0.0], [1.0, 0.2, -0.2], [1.2, -0.2, 0.2]]))
    projection = project_manifold(spatial_marginal(predicted, model), cloud, TrackerConfig())
    posterior = precision_update(predicted, projection, model)

    assert 0 < posterior.mean[0] < projection.mean[0]
    assert posterior.mean[3] > 0
    assert np.all(np.diag(posterior.cov) < np.diag(predicted.cov))


def test_step_keeps_prior_on_empty_droplet(model, prior):
    state, projection = step(prior, PointCloud(np.array([[100.0, 100.0, 100.0]])), model, TrackerConfig())

    assert projection.droplet_empty
    expected = predict(prior, model)
    np.testing.assert_array_equal(state.mean, expected.mean)
    np.testing.assert_array_equal(state.cov, expected.cov)


def test_repeated_empty_frames_inflate_covariance(model, prior):
    far = PointCloud(np.array([[500.0, 0.0, 0.0]]))
    state = prior
    traces = []
    for _ in range(5):
        state, projection = step(state, far, model, TrackerConfig())
        assert projection.droplet_empty
        traces.append(np.trace(state.cov))
    assert np.all(np.diff(traces) > 0)


def test_baseline_is_centroid_update(model, prior):
    points = np.array([[1.0, 0.0, 0.0], [3.0, 2.0, 0.0]])
    r_meas = np.eye(3)
    posterior = baseline_map_step(prior, PointCloud(points), model, r_meas)

    # Two updates with the individual points must give the same result as one update with the centroid
    predicted = predict(prior, model)
    h = model.h_matrix
    cov = predicted.cov
    mean = predicted.mean
    for point in points:
        gain = cov @ h.T @ np.linalg.inv(h @ cov @ h.T + r_meas)
        mean = mean + gain @ (point - h @ mean)
        cov = (np.eye(6) - gain @ h) @ cov
    np.testing.assert_allclose(posterior.mean, mean, atol=1e-10)
    np.testing.assert_allclose(posterior.cov, cov, atol=1e-10)


def test_baseline_empty_cloud_returns_prediction(model, prior):
    posterior = baseline_map_step(prior, PointCloud.empty(3), model, np.eye(3))
    np.testing.assert_array_equal(posterior.mean, predict(prior, model).mean)


def test_baseline_dragged_by_ghosts_tracker_not(rng, model, prior):
    points = np.vstack([rng.normal(size=(50, 3)) * 0.5, rng.normal(size=(50, 3)) * 0.5 + [0.0, 40.0, 0.0]])
    start = GaussianState(np.zeros(6), prior.cov)
    tracker_state, _ = step(start, PointCloud(points), model, TrackerConfig())
    baseline_state = baseline_map_step(start, PointCloud(points), model, 0.25 * np.eye(3))

    assert abs(tracker_state.mean[1]) < 1.0
    assert baseline_state.mean[1] > 15.0


def test_sequence_algorithms(rng, model, prior):
    clouds = [PointCloud(rng.normal(size=(20, 3)) + [k, 0.0, 0.0]) for k in range(1, 6)]
    clouds[2] = PointCloud(np.array([[200.0, 0.0, 0.0]]))

    tracker = InformationTracker(model, TrackerConfig())
    result = tracker.track(prior, clouds)
    baseline = GaussianMapTracker(model, np.eye(3)).track(prior, clouds)

    assert result is tracker
    assert len(tracker.states_) == 5
    assert tracker.means_.shape == (5, 6)
    np.testing.assert_array_equal(tracker.droplet_empty_, [False, False, True, False, False])
    assert len(baseline.states_) == 5
    assert baseline.means_[2, 0] > 20


def test_tracker_default_config(rng, model, prior):
    clouds = [PointCloud(rng.normal(size=(10, 3)))]
    default = InformationTracker(model).track(prior, clouds)
    explicit = InformationTracker(model, TrackerConfig()).track(prior, clouds)

    np.testing.assert_array_equal(default.means_, explicit.means_)


@pytest.mark.parametrize(
    "kwargs",
    (
        {"r_min": -np.eye(3)},
        {"r_min": np.ones((2, 3))},
        {"max_iterations": 0},
        {"convergence_tol": 0.0},
    ),
)
def test_invalid_tracker_config(kwargs):
    with pytest.raises(ValueError):
        TrackerConfig(**kwargs)


def test_invalid_kinematic_model():
    with pytest.raises(ValueError, match="q_matrix"):
        KinematicModel(np.eye(2), -np.eye(2), np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError, match="h_matrix"):
        KinematicModel(np.eye(2), np.eye(2), np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(ValueError, match="full row rank"):
        KinematicModel(np.eye(2), np.eye(2), np.array([[1.0, 0.0], [2.0, 0.0]]))


def test_cloud_dimension_mismatch(spatial_prior):
    with pytest.raises(ValueError, match="dimension"):
        project_manifold(spatial_prior, PointCloud(np.zeros((3, 2))), TrackerConfig())


def test_looser_boundary_keeps_more_points(rng, spatial_prior):
    cloud = PointCloud(rng.normal(size=(200, 3)) * 2.0)
    tight = project_manifold(spatial_prior, cloud, TrackerConfig(geometry=GeometryParams(alpha=2.0)))
    loose = project_manifold(spatial_prior, cloud, TrackerConfig(geometry=GeometryParams(alpha=0.6)))

    assert np.count_nonzero(loose.weights) >= np.count_nonzero(tight.weights)


@pytest.fixture
def scalar_model():
    return KinematicModel(np.eye(1), np.zeros((1, 1)), np.eye(1))


def _projection(mean, cov):
    return ProjectionResult(np.atleast_1d(mean), np.atleast_2d(cov), np.ones(1), droplet_empty=False, iterations_used=1)


def test_scalar_precision_update(scalar_model):
    prior = GaussianState(np.zeros(1), np.eye(1))
    posterior = precision_update(prior, _projection(2.0, 1.0), scalar_model)

    np.testing.assert_allclose(posterior.mean, [1.0])
    np.testing.assert_allclose(posterior.cov, [[0.5]])


def test_precision_update_without_innovation(model, prior):
    state = GaussianState(np.array([1.0, 2.0, 3.0, 0.5, 0.0, -0.5]), prior.cov)
    posterior = precision_update(state, _projection(state.mean[:3], np.eye(3)), model)

    np.testing.assert_allclose(posterior.mean, state.mean)
    assert np.all(np.diag(posterior.cov)[:3] < np.diag(state.cov)[:3])


def test_precision_update_with_uninformative_projection(model, prior):
    state = GaussianState(np.array([1.0, 2.0, 3.0, 0.5, 0.0, -0.5]), prior.cov)
    posterior = precision_update(state, _projection(np.array([5.0, -5.0, 0.0]), 1e12 * np.eye(3)), model)

    np.testing.assert_allclose(posterior.mean, state.mean, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(posterior.cov, state.cov, rtol=1e-6, atol=1e-9)


def test_predict_with_identity_model():
    model = KinematicModel(np.eye(2), np.zeros((2, 2)), np.array([[1.0, 0.0]]))
    state = GaussianState(np.array([3.0, -1.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    predicted = predict(state, model)

    np.testing.assert_allclose(predicted.mean, state.mean)
    np.testing.assert_allclose(predicted.cov, state.cov)


def test_predict_moves_by_velocity():
    model = constant_velocity_model(1, dt=1.0, intensity=0.0)
    predicted = predict(GaussianState(np.array([0.0, 1.0]), np.eye(2)), model)

    np.testing.assert_allclose(predicted.mean, [1.0, 1.0])


def test_predict_adds_process_noise():
    model = KinematicModel(np.eye(2), 0.3 * np.eye(2), np.array([[1.0, 0.0]]))
    predicted = predict(GaussianState(np.zeros(2), np.eye(2)), model)

    np.testing.assert_allclose(predicted.cov, 1.3 * np.eye(2))


def test_empty_frames_bring_the_cluster_closer(model, prior):
    far = PointCloud(np.array([[60.0, 0.0, 0.0]]))
    state = prior
    distances = []
    for _ in range(5):
        state, projection = step(state, far, model, TrackerConfig())
        assert projection.droplet_empty
        spatial = spatial_marginal(state, model)
        diff = far.points[0] - spatial.mean
        distances.append(float(diff @ np.linalg.solve(spatial.cov, diff)))
    assert np.all(np.diff(distances) < 0)


def test_single_iteration_of_equidistant_points_is_centroid(spatial_prior):
    points = np.eye(3)
    config = TrackerConfig(max_iterations=1)
    result = project_manifold(spatial_prior, PointCloud(points), config)

    centroid = points.mean(axis=0)
    scatter = (points - centroid).T @ (points - centroid) / 3
    np.testing.assert_allclose(result.mean, centroid)
    np.testing.assert_allclose(result.cov, scatter + config.r_min)
    np.testing.assert_allclose(result.weights, np.full(3, 1 / 3))


def test_single_iteration_is_overlap_weighted_mean(spatial_prior):
    points = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    result = project_manifold(spatial_prior, PointCloud(points), TrackerConfig(max_iterations=1))

    # Overlaps exp(-D / 8) for the squared distances 1 and 4, both above the threshold 0.5
    overlaps = np.exp(-np.array([1.0, 4.0]) / 8)
    np.testing.assert_allclose(result.mean, [overlaps @ points[:, 0] / overlaps.sum(), 0.0, 0.0])
    np.testing.assert_allclose(result.weights, overlaps / overlaps.sum())


def test_posterior_covariance_stays_symmetric_and_positive(rng, model, prior):
    clouds = [PointCloud(rng.normal(size=(30, 3)) + [k, 0.5 * k**2, 0.0]) for k in range(1, 9)]
    clouds[4] = PointCloud(np.array([[300.0, 0.0, 0.0]]))
    tracker = InformationTracker(model, TrackerConfig()).track(prior, clouds)

    for state in tracker.states_:
        np.testing.assert_array_equal(state.cov, state.cov.T)
        assert np.linalg.eigvalsh(state.cov).min() > 0


def test_ghost_cluster_gets_zero_weight(rng, spatial_prior):
    valid = rng.normal(size=(50, 3))
    ghosts = rng.normal(size=(50, 3)) + [0.0, 40.0, 0.0]
    result = project_manifold(spatial_prior, PointCloud(np.vstack([valid, ghosts])), TrackerConfig())

    assert np.all(result.weights[50:] == 0.0)
    assert np.linalg.norm(result.mean - valid.mean(axis=0)) <= 3 / np.sqrt(50)
