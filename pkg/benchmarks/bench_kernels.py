"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py --points 20000 --repeat 5
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from smartdiary import kernels


def synthetic_day(n: int, seed: int = 0):
    """Alternating 20-minute dwells and 10-minute walks at 1 Hz."""
    rng = np.random.default_rng(seed)
    lat = np.empty(n)
    lon = np.empty(n)
    north = east = 0.0
    for k in range(n):
        if (k // 600) % 3 == 2:
            heading = (k // 1800) * 1.3
            north += 1.4 * math.cos(heading)
            east += 1.4 * math.sin(heading)
        lat[k] = 52.0 + math.degrees((north + rng.normal(0, 3)) / kernels.EARTH_RADIUS_M)
        lon[k] = 5.0 + math.degrees((east + rng.normal(0, 3)) / (kernels.EARTH_RADIUS_M * math.cos(math.radians(52))))
    t_ms = np.arange(n, dtype=np.int64) * 1000
    return lat, lon, t_ms


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    lat, lon, t_ms = synthetic_day(args.points)
    impls = kernels.backends()
    cases = {
        "stop_windows": lambda m: m.stop_windows(lat, lon, t_ms, 50.0, 300_000),
        "consecutive_distances": lambda m: m.consecutive_distances(lat, lon),
        "path_length": lambda m: m.path_length(lat, lon),
    }
    print(f"{args.points} points, best of {args.repeat}; active backend: {kernels.BACKEND}")
    print(f"{'kernel':24s}" + "".join(f"{name:>12s}" for name in impls) + ("     speedup" if len(impls) > 1 else ""))
    for label, fn in cases.items():
        best = {name: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for name, m in impls.items()}
        row = f"{label:24s}" + "".join(f"{best[name] * 1e3:10.2f}ms" for name in impls)
        if len(impls) > 1:
            row += f"{best['python'] / best['cython']:11.1f}x"
        print(row)
    if len(impls) > 1:
        same = impls["python"].stop_windows(lat, lon, t_ms, 50.0, 300_000) == \
            impls["cython"].stop_windows(lat, lon, t_ms, 50.0, 300_000)
        print(f"stop windows identical across backends: {same}")


if __name__ == "__main__":
    main()
