# cython: language_level=3
"""Compiled versions of the hot loops in ``smartdiary._kernels_py``.

Both modules must apply the haversine formula in the same operation order so
that radius decisions in :func:`stop_windows` agree bit for bit.
"""
from libc.math cimport asin, cos, sin, sqrt

cdef double EARTH_RADIUS_M = 6371000.0
cdef double DEG = 3.141592653589793 / 180.0


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) nogil:
    cdef double p1 = lat1 * DEG
    cdef double p2 = lat2 * DEG
    cdef double s1 = sin((lat2 - lat1) * DEG * 0.5)
    cdef double s2 = sin((lon2 - lon1) * DEG * 0.5)
    cdef double a = s1 * s1 + cos(p1) * cos(p2) * s2 * s2
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * asin(sqrt(a))


def haversine(double lat1, double lon1, double lat2, double lon2):
    return _hav(lat1, lon1, lat2, lon2)


def consecutive_distances(const double[::1] lat, const double[::1] lon):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t k
    out = [0.0] * (n - 1 if n > 1 else 0)
    for k in range(1, n):
        out[k - 1] = _hav(lat[k - 1], lon[k - 1], lat[k], lon[k])
    return out


def distances_from(double lat0, double lon0, const double[::1] lat, const double[::1] lon):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t k
    out = [0.0] * n
    for k in range(n):
        out[k] = _hav(lat0, lon0, lat[k], lon[k])
    return out


def path_length(const double[::1] lat, const double[::1] lon):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t k
    cdef double total = 0.0
    with nogil:
        for k in range(1, n):
            total += _hav(lat[k - 1], lon[k - 1], lat[k], lon[k])
    return total


def stop_windows(const double[::1] lat, const double[::1] lon, const long long[::1] t_ms,
                 double radius_m, long long min_duration_ms):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t j
    windows = []
    while i < n:
        j = i + 1
        while j < n and _hav(lat[i], lon[i], lat[j], lon[j]) <= radius_m:
            j += 1
        if t_ms[j - 1] - t_ms[i] >= min_duration_ms:
            windows.append((i, j - 1))
            i = j
        elif j == n:
            break
        else:
            i += 1
    return windows
