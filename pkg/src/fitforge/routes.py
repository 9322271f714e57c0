"""Route signatures and k-means clustering of workout routes.

Every workout carries a unique coordinate trace, which is far too many
categories for the user x route-category x context tensor.  This module
summarizes each trace as a fixed-length signature (resampled geometry
plus length and ascent totals) and clusters the signatures with seeded
k-means so the tensor's route mode stays small.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import WorkoutRecord
from .errors import DegenerateRouteError, InfeasibleClusterCountError
from .geo import path_arc_length_km

DEFAULT_SIGNATURE_POINTS = 16
DEFAULT_CLUSTER_COUNT = 32


def signature_dimension(n_points: int) -> int:
    return 3 * n_points + 2


def route_signature(record: WorkoutRecord, n_points: int = DEFAULT_SIGNATURE_POINTS) -> np.ndarray:
    """Fixed-length geometric summary of one route.

    Latitude, longitude, and altitude are linearly resampled at
    ``n_points`` equispaced arc-length positions along the coordinate
    path; total path length (km) and total ascent (m) are appended,
    giving a vector of dimension ``3 * n_points + 2``.
    """
    if record.length < 2:
        raise DegenerateRouteError(f"workout {record.workout_id}: need at least 2 points")
    arc = path_arc_length_km(record.lat_seq, record.lon_seq)
    total_km = float(arc[-1])
    if total_km <= 0.0:
        raise DegenerateRouteError(f"workout {record.workout_id}: zero-length route")
    targets = np.linspace(0.0, total_km, n_points)
    lat = np.interp(targets, arc, record.lat_seq)
    lon = np.interp(targets, arc, record.lon_seq)
    alt = np.interp(targets, arc, record.altitude_seq)
    ascent_m = float(np.maximum(np.diff(record.altitude_seq), 0.0).sum())
    return np.concatenate([lat, lon, alt, [total_km], [ascent_m]])


@dataclass
class ClusterModel:
    """k centroids in standardized signature space plus the standardization stats."""

    centroids: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    seed: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def standardize(self, signatures: np.ndarray) -> np.ndarray:
        return (signatures - self.feature_mean) / self.feature_std


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(points.shape[0])]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(points.shape[0], p=d2 / total)
        else:
            idx = rng.integers(points.shape[0])
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(
    signatures: np.ndarray,
    k: int = DEFAULT_CLUSTER_COUNT,
    seed: int = 0,
    max_iters: int = 100,
) -> ClusterModel:
    """Seeded k-means++ with Lloyd iterations to an assignment fixpoint.

    Signature components are standardized by their mean/std over the
    given (training) signatures before clustering so the distance-km and
    coordinate components weigh comparably.  Empty clusters are reseeded
    from the point farthest from its centroid.
    """
    signatures = np.asarray(signatures, dtype=float)
    if signatures.ndim != 2:
        raise ValueError("signatures must be a 2-d array")
    n_distinct = np.unique(signatures, axis=0).shape[0]
    if k > n_distinct:
        raise InfeasibleClusterCountError(f"k={k} exceeds {n_distinct} distinct signatures")
    if k < 1:
        raise InfeasibleClusterCountError("k must be >= 1")

    mean = signatures.mean(axis=0)
    std = signatures.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    points = (signatures - mean) / std

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    labels = None
    inertia_history: list[float] = []
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for j in range(k):
            members = points[new_labels == j]
            if members.shape[0] == 0:
                farthest = int(np.argmax(d2[np.arange(points.shape[0]), new_labels]))
                centers[j] = points[farthest]
                new_labels[farthest] = j
            else:
                centers[j] = members.mean(axis=0)
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(points.shape[0]), new_labels].sum())
        if inertia_history:
            assert inertia <= inertia_history[-1] + 1e-9 * max(inertia_history[-1], 1.0)
        inertia_history.append(inertia)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    return ClusterModel(centroids=centers, feature_mean=mean, feature_std=std, seed=seed, inertia_history=inertia_history)


def assign(model: ClusterModel, signature: np.ndarray) -> int:
    """Index of the nearest centroid; ties resolve to the lowest index."""
    signature = np.asarray(signature, dtype=float)
    if signature.shape != (model.centroids.shape[1],):
        raise ValueError(
            f"signature dimension {signature.shape} does not match model dimension ({model.centroids.shape[1]},)"
        )
    z = (signature - model.feature_mean) / model.feature_std
    d2 = ((model.centroids - z) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_records(
    model: ClusterModel,
    records: Sequence[WorkoutRecord],
    n_points: int = DEFAULT_SIGNATURE_POINTS,
) -> dict[str, int]:
    """Cluster id per workout id."""
    return {r.workout_id: assign(model, route_signature(r, n_points)) for r in records}
