"""Spherical distance helpers and a local flat-earth frame for short-range geometry."""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_M = 6_371_008.8  # WGS84 mean radius
M_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0


def geo_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in meters between two ``(lon, lat)`` pairs."""
    lon1, lat1 = map(math.radians, a)
    lon2, lat2 = map(math.radians, b)
    dphi = lat2 - lat1
    dlmb = lon2 - lon1
    h = math.sin(dphi / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def geo_distance_np(lon1, lat1, lon2, lat2) -> np.ndarray:
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    h = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def polyline_length(coords) -> float:
    return sum(geo_distance(coords[i], coords[i + 1]) for i in range(len(coords) - 1))


def to_local(lon, lat, lon0: float, lat0: float):
    """Equirectangular projection to meters around ``(lon0, lat0)``."""
    kx = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    return (np.asarray(lon) - lon0) * kx, (np.asarray(lat) - lat0) * M_PER_DEG_LAT


def from_local(x, y, lon0: float, lat0: float):
    kx = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    return lon0 + np.asarray(x) / kx, lat0 + np.asarray(y) / M_PER_DEG_LAT


def offset(lon: float, lat: float, east_m: float, north_m: float) -> tuple[float, float]:
    """Shift a coordinate by a small east/north displacement in meters."""
    kx = M_PER_DEG_LAT * math.cos(math.radians(lat))
    return lon + east_m / kx, lat + north_m / M_PER_DEG_LAT
