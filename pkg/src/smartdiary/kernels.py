"""Backend selection for the distance and stop-scan kernels.

The compiled extension ``smartdiary._ckernels`` is used when it imports;
otherwise the pure-Python module is used. Set ``SMARTDIARY_PURE_PYTHON=1`` to
force the fallback. Inputs to the array kernels are coerced to contiguous
float64 (coordinates) and int64 (millisecond timestamps).
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("SMARTDIARY_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

EARTH_RADIUS_M = _kernels_py.EARTH_RADIUS_M


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    return _impl.haversine(float(lat1), float(lon1), float(lat2), float(lon2))


def consecutive_distances(lat, lon) -> np.ndarray:
    return np.asarray(_impl.consecutive_distances(_f64(lat), _f64(lon)), dtype=np.float64)


def distances_from(lat0: float, lon0: float, lat, lon) -> np.ndarray:
    return np.asarray(_impl.distances_from(float(lat0), float(lon0), _f64(lat), _f64(lon)),
                      dtype=np.float64)


def path_length(lat, lon) -> float:
    return float(_impl.path_length(_f64(lat), _f64(lon)))


def stop_windows(lat, lon, t_ms, radius_m: float, min_duration_ms: int) -> list[tuple[int, int]]:
    return [
        (int(i), int(j))
        for i, j in _impl.stop_windows(
            _f64(lat), _f64(lon), np.ascontiguousarray(t_ms, dtype=np.int64),
            float(radius_m), int(min_duration_ms),
        )
    ]


def backends() -> dict:
    """Map backend name to implementation module, for tests and benchmarks."""
    found = {"python": _kernels_py}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
