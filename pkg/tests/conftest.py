from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smartdiary.trajectory import GeoPoint, SubTrace, Trace

settings.register_profile(
    "repo", derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

DATA = Path(__file__).resolve().parent.parent / "src" / "smartdiary" / "data"
T0 = datetime(2024, 5, 14, 6, 0, tzinfo=timezone.utc)
R = 6_371_000.0


def offset(lat, lon, north_m, east_m):
    return (lat + math.degrees(north_m / R), lon + math.degrees(east_m / (R * math.cos(math.radians(lat)))))


def make_trace(lat, lon, t_s, rid="R1", t0=T0) -> Trace:
    pts = tuple(
        GeoPoint(float(a), float(b), t0 + timedelta(milliseconds=int(round(float(s) * 1000))))
        for a, b, s in zip(lat, lon, t_s)
    )
    return Trace(rid, pts)


def as_subtrace(tr: Trace) -> SubTrace:
    return SubTrace(tr.respondent_id, tr.points, start=0, stop=len(tr.points))


def random_walk(seed: int, max_points: int = 200):
    """Dwell/move episodes with irregular sampling; returns (lat, lon, t_s)."""
    rng = np.random.default_rng(seed)
    lat0, lon0 = 52.0 + rng.uniform(-1, 1), 5.0 + rng.uniform(-1, 1)
    lats, lons, ts = [], [], []
    t = 0.0
    north = east = 0.0
    n = int(rng.integers(5, max_points + 1))
    while len(ts) < n:
        dwell = rng.random() < 0.5
        span = rng.uniform(60, 900)
        step = rng.choice([1.0, 5.0, 10.0, 30.0])
        jitter = rng.uniform(0, 35)
        speed = rng.uniform(0.5, 20)
        heading = rng.uniform(0, 2 * np.pi)
        end = t + span
        while t < end and len(ts) < n:
            if dwell:
                dn, de = rng.normal(0, jitter / 2, 2)
                la, lo = offset(lat0, lon0, north + dn, east + de)
            else:
                north += speed * step * np.cos(heading)
                east += speed * step * np.sin(heading)
                la, lo = offset(lat0, lon0, north, east)
            lats.append(la)
            lons.append(lo)
            ts.append(t)
            t += step * rng.uniform(0.8, 1.2)
    return np.array(lats), np.array(lons), np.round(np.array(ts), 3)


@pytest.fixture
def worked_paths():
    return {
        "sensor": DATA / "worked_example_sensor.csv",
        "config": DATA / "worked_example.conf",
        "diary": DATA / "worked_example_diary.csv",
        "app": DATA / "worked_example_app.csv",
        "gazetteer": DATA / "worked_example_gazetteer.csv",
        "scenario": DATA / "worked_example.toml",
    }


# --- acceptance summary ------------------------------------------------------------

_ACCEPTANCE: dict[int, list[bool]] = {}
_TITLES: dict[int, str] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.setdefault(crit, []).append(report.outcome == "passed")
        _TITLES[crit] = dict(report.user_properties).get("title", "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        status = "PASS" if all(_ACCEPTANCE[crit]) else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {status}  {_TITLES[crit]}")
