"""Great-circle helpers for route geometry."""

from __future__ import annotations

import numpy as np

EARTH_RADIUS_KM = 6371.0088


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between coordinate pairs given in degrees.

    Accepts scalars or equally shaped arrays and broadcasts elementwise.
    """
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=float)) for v in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def path_arc_length_km(lat_seq, lon_seq) -> np.ndarray:
    """Cumulative great-circle arc length along a coordinate path, in km.

    Returns an array of the same length as the input, starting at 0.
    """
    lat = np.asarray(lat_seq, dtype=float)
    lon = np.asarray(lon_seq, dtype=float)
    if lat.shape != lon.shape or lat.ndim != 1:
        raise ValueError("lat_seq and lon_seq must be 1-d arrays of equal length")
    if lat.size == 0:
        return np.zeros(0)
    steps = haversine_km(lat[:-1], lon[:-1], lat[1:], lon[1:])
    return np.concatenate([[0.0], np.cumsum(steps)])
