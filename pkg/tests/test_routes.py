"""Route signatures and k-means clustering."""

import numpy as np
import pytest

from fitforge.errors import DegenerateRouteError, InfeasibleClusterCountError
from fitforge.geo import haversine_km, path_arc_length_km
from fitforge.routes import ClusterModel, assign, kmeans_fit, route_signature, signature_dimension

from conftest import make_record


class TestGeo:
    def test_haversine_known_value(self):
        # one degree of latitude is ~111.2 km
        assert haversine_km(45.0, 7.0, 46.0, 7.0) == pytest.approx(111.2, abs=0.3)

    def test_arc_length_starts_at_zero_and_accumulates(self):
        arc = path_arc_length_km([45.0, 45.0, 45.0], [7.0, 7.1, 7.2])
        assert arc[0] == 0.0
        assert arc[2] == pytest.approx(2 * arc[1], rel=1e-9)


class TestRouteSignature:
    def test_straight_line_constant_altitude(self):
        record = make_record(length=9)
        record.lon_seq[:] = 7.0  # due-north meridian line: uniform arc per degree
        record.altitude_seq[:] = 250.0
        sig = route_signature(record, n_points=4)
        assert sig.shape == (signature_dimension(4),)
        lat = sig[:4]
        np.testing.assert_allclose(np.diff(lat), np.diff(lat)[0], rtol=1e-6)  # equally spaced
        assert sig[-1] == 0.0  # zero ascent

    def test_resampling_density_invariance(self):
        record = make_record(length=6)
        dense = make_record(length=11)
        # brute-force interpolation: insert midpoints of every segment
        for name in ("lat_seq", "lon_seq", "altitude_seq"):
            coarse = getattr(record, name)
            fine = np.empty(11)
            fine[0::2] = coarse
            fine[1::2] = 0.5 * (coarse[:-1] + coarse[1:])
            setattr(dense, name, fine)
        dense.distance_seq = np.linspace(0.0, record.distance_seq[-1], 11)
        sig_a = route_signature(record, 8)
        sig_b = route_signature(dense, 8)
        np.testing.assert_allclose(sig_a, sig_b, rtol=1e-6, atol=1e-6)

    def test_single_point_is_degenerate(self):
        record = make_record(length=1, distance=[0.0])
        with pytest.raises(DegenerateRouteError):
            route_signature(record)

    def test_zero_length_route_is_degenerate(self):
        record = make_record(length=4, distance=[0, 0, 0, 0])
        record.lat_seq[:] = 45.0
        record.lon_seq[:] = 7.0
        with pytest.raises(DegenerateRouteError):
            route_signature(record)


class TestKMeans:
    def test_k_equals_points_zero_inertia(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(6, 3))
        model = kmeans_fit(points, k=6, seed=0)
        assert model.inertia_history[-1] == pytest.approx(0.0, abs=1e-20)

    def test_two_separated_blobs(self):
        rng = np.random.default_rng(1)
        blob_a = rng.normal(0.0, 0.01, size=(40, 4))
        blob_b = rng.normal(0.0, 0.01, size=(40, 4)) + 100.0
        points = np.vstack([blob_a, blob_b])
        model = kmeans_fit(points, k=2, seed=3)
        labels = [assign(model, p) for p in points]
        assert len(set(labels[:40])) == 1
        assert len(set(labels[40:])) == 1
        assert labels[0] != labels[40]
        # brute-force nearest-centroid check on the standardized points
        z = model.standardize(points)
        for point, label in zip(z, labels):
            dists = [float(((point - c) ** 2).sum()) for c in model.centroids]
            assert label == int(np.argmin(dists))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(30, 5))
        m1 = kmeans_fit(points, k=4, seed=9)
        m2 = kmeans_fit(points, k=4, seed=9)
        np.testing.assert_array_equal(m1.centroids, m2.centroids)

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(100, 6))
        model = kmeans_fit(points, k=7, seed=1)
        history = model.inertia_history
        assert all(history[i + 1] <= history[i] + 1e-9 for i in range(len(history) - 1))

    def test_infeasible_k(self):
        points = np.zeros((5, 2))
        points[0] = [1, 1]
        with pytest.raises(InfeasibleClusterCountError):
            kmeans_fit(points, k=3, seed=0)

    def test_centroid_assignment_identity(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(25, 3))
        model = kmeans_fit(points, k=5, seed=5)
        # a centroid's own (de-standardized) signature assigns to itself
        for i, centroid in enumerate(model.centroids):
            raw = centroid * model.feature_std + model.feature_mean
            assert assign(model, raw) == i


class TestAssign:
    def _model(self):
        centroids = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        return ClusterModel(
            centroids=centroids,
            feature_mean=np.zeros(2),
            feature_std=np.ones(2),
            seed=0,
        )

    def test_exact_centroid_match(self):
        assert assign(self._model(), np.array([3.0, 0.0])) == 2

    def test_tie_breaks_to_lowest_index(self):
        # midway between centroids 1 and 2
        assert assign(self._model(), np.array([2.0, 0.0])) == 1

    def test_random_point_brute_force(self):
        model = self._model()
        rng = np.random.default_rng(6)
        for _ in range(20):
            point = rng.normal(size=2)
            dists = [float(((point - c) ** 2).sum()) for c in model.centroids]
            assert assign(model, point) == int(np.argmin(dists))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            assign(self._model(), np.zeros(3))
