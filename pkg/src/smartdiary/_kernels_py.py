"""Pure-Python kernels, used when the compiled extension is unavailable."""
from __future__ import annotations

from math import asin, cos, sin, sqrt

EARTH_RADIUS_M = 6371000.0
DEG = 3.141592653589793 / 180.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = lat1 * DEG
    p2 = lat2 * DEG
    s1 = sin((lat2 - lat1) * DEG * 0.5)
    s2 = sin((lon2 - lon1) * DEG * 0.5)
    a = s1 * s1 + cos(p1) * cos(p2) * s2 * s2
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * asin(sqrt(a))


def consecutive_distances(lat, lon) -> list[float]:
    lat = list(lat)
    lon = list(lon)
    return [haversine(lat[k - 1], lon[k - 1], lat[k], lon[k]) for k in range(1, len(lat))]


def distances_from(lat0: float, lon0: float, lat, lon) -> list[float]:
    return [haversine(lat0, lon0, a, b) for a, b in zip(list(lat), list(lon))]


def path_length(lat, lon) -> float:
    total = 0.0
    for d in consecutive_distances(lat, lon):
        total += d
    return total


def stop_windows(lat, lon, t_ms, radius_m: float, min_duration_ms: int) -> list[tuple[int, int]]:
    """Forward anchor scan; returns inclusive ``(first, last)`` index pairs."""
    lat = list(lat)
    lon = list(lon)
    t_ms = list(t_ms)
    n = len(lat)
    windows = []
    i = 0
    while i < n:
        la, lo = lat[i], lon[i]
        j = i + 1
        while j < n and haversine(la, lo, lat[j], lon[j]) <= radius_m:
            j += 1
        if t_ms[j - 1] - t_ms[i] >= min_duration_ms:
            windows.append((i, j - 1))
            i = j
        elif j == n:
            # every later anchor has a shorter window
            break
        else:
            i += 1
    return windows
