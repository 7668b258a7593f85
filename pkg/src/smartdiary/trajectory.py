"""Geodesic primitives, raw-location ingest and trace validation.

Points carry UTC instants truncated to whole milliseconds; the array views
used by the kernels hold those instants as int64 milliseconds since the epoch
so duration comparisons are exact.
"""
from __future__ import annotations

import csv
import re
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels

EARTH_RADIUS_M = kernels.EARTH_RADIUS_M
DEFAULT_MAX_GAP_S = 300.0
RAW_HEADER = ("respondent_id", "timestamp", "lat", "lon")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


class TooFewPoints(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    t: datetime

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinate out of range: ({self.lat}, {self.lon})")
        if self.t.tzinfo is None:
            raise ValueError("GeoPoint.t must be timezone-aware")

    @property
    def t_ms(self) -> int:
        return to_ms(self.t)


def to_ms(t: datetime) -> int:
    """Whole milliseconds since the Unix epoch."""
    return (t - _EPOCH) // _MS


def from_ms(ms: int) -> datetime:
    return _EPOCH + timedelta(milliseconds=int(ms))


_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?"
    r"(?:([Zz])|([+-])(\d{2}):(\d{2}))$"
)


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into a UTC datetime with ms resolution.

    The offset is honoured, then discarded. Naive timestamps are rejected.
    """
    m = _RFC3339.match(text.strip())
    if m is None:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    y, mo, d, hh, mi, ss, frac, zulu, sign, oh, om = m.groups()
    ms = int((frac or "0")[:3].ljust(3, "0"))
    if zulu:
        tz = timezone.utc
    else:
        off = timedelta(hours=int(oh), minutes=int(om))
        tz = timezone(-off if sign == "-" else off)
    t = datetime(int(y), int(mo), int(d), int(hh), int(mi), int(ss), ms * 1000, tzinfo=tz)
    return t.astimezone(timezone.utc)


def format_timestamp(t: datetime) -> str:
    t = t.astimezone(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


@dataclass(frozen=True)
class Trace:
    respondent_id: str
    points: tuple[GeoPoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def lats(self) -> np.ndarray:
        return np.array([p.lat for p in self.points], dtype=np.float64)

    @cached_property
    def lons(self) -> np.ndarray:
        return np.array([p.lon for p in self.points], dtype=np.float64)

    @cached_property
    def times_ms(self) -> np.ndarray:
        return np.array([p.t_ms for p in self.points], dtype=np.int64)


@dataclass(frozen=True)
class SubTrace(Trace):
    """Contiguous slice ``[start, stop)`` of a parent trace."""

    start: int = 0
    stop: int = 0


# --- geodesy -----------------------------------------------------------------

def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    return kernels.haversine(a.lat, a.lon, b.lat, b.lon)


def track_length_m(points: Sequence[GeoPoint]) -> float:
    if len(points) < 2:
        return 0.0
    return kernels.path_length([p.lat for p in points], [p.lon for p in points])


def median_speed_mps(points: Sequence[GeoPoint]) -> float:
    """Median of the per-segment speeds of a strictly time-ordered sequence."""
    if len(points) < 2:
        raise TooFewPoints(f"need at least 2 points, got {len(points)}")
    d = kernels.consecutive_distances([p.lat for p in points], [p.lon for p in points])
    dt = np.diff(np.array([p.t_ms for p in points], dtype=np.int64)) / 1000.0
    if np.any(dt <= 0):
        raise ValueError("timestamps must be strictly increasing")
    return float(statistics.median((d / dt).tolist()))


# --- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class RawRow:
    row: int  # 1-based data row number in the source file (header excluded)
    respondent_id: str
    timestamp: str
    lat: str
    lon: str


@dataclass(frozen=True)
class Violation:
    row: int
    kind: str
    message: str

    def __str__(self) -> str:
        return f"row {self.row}: {self.kind}: {self.message}"


class TraceValidationError(ValueError):
    """Carries every violation found, not just the first."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def validate_trace(rows: Sequence[RawRow], respondent_id: str | None = None) -> Trace:
    """Build a Trace from one respondent's rows in file order.

    Raises TraceValidationError listing all of: MalformedRow,
    CoordinateOutOfRange, DuplicateTimestamp, NonMonotoneTimestamp, EmptyTrace.
    """
    if not rows:
        raise TraceValidationError([Violation(0, "EmptyTrace", "no location rows")])
    rid = respondent_id if respondent_id is not None else rows[0].respondent_id
    violations: list[Violation] = []
    points: list[GeoPoint] = []
    last_ms: int | None = None
    for r in rows:
        try:
            t = parse_timestamp(r.timestamp)
            lat, lon = float(r.lat), float(r.lon)
        except (ValueError, TypeError) as exc:
            violations.append(Violation(r.row, "MalformedRow", str(exc)))
            continue
        if not (np.isfinite(lat) and np.isfinite(lon)):
            violations.append(Violation(r.row, "MalformedRow", "non-finite coordinate"))
            continue
        if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
            violations.append(Violation(r.row, "CoordinateOutOfRange", f"lat={lat}, lon={lon}"))
            continue
        ms = to_ms(t)
        if last_ms is not None:
            if ms == last_ms:
                violations.append(Violation(r.row, "DuplicateTimestamp", r.timestamp))
                continue
            if ms < last_ms:
                violations.append(Violation(r.row, "NonMonotoneTimestamp", r.timestamp))
                continue
        last_ms = ms
        points.append(GeoPoint(lat, lon, t))
    if violations:
        raise TraceValidationError(violations)
    return Trace(rid, tuple(points))


def read_raw_rows(path) -> dict[str, list[RawRow]]:
    """Read the raw-location file, grouping rows by respondent in file order."""
    groups: dict[str, list[RawRow]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return groups
        header = [h.strip() for h in header]
        if tuple(header[:4]) != RAW_HEADER:
            raise TraceValidationError(
                [Violation(0, "MalformedRow", f"expected header {','.join(RAW_HEADER)}")]
            )
        for n, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) < 4:
                rec = list(rec) + [""] * (4 - len(rec))
            groups.setdefault(rec[0], []).append(RawRow(n, rec[0], rec[1], rec[2], rec[3]))
    return groups


def read_traces(path) -> list[Trace]:
    """Validate every respondent in a raw-location file.

    All violations across respondents are collected into one error.
    """
    groups = read_raw_rows(path)
    if not groups:
        raise TraceValidationError([Violation(0, "EmptyTrace", f"{path}: no location rows")])
    traces, violations = [], []
    for rid in sorted(groups):
        try:
            traces.append(validate_trace(groups[rid], rid))
        except TraceValidationError as exc:
            violations.extend(exc.violations)
    if violations:
        raise TraceValidationError(sorted(violations, key=lambda v: v.row))
    return traces


def write_traces(path, traces: Iterable[Trace]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for tr in traces:
            for p in tr.points:
                w.writerow([tr.respondent_id, format_timestamp(p.t), f"{p.lat:.8f}", f"{p.lon:.8f}"])


# --- gaps ------------------------------------------------------------------------

def split_on_gaps(trace: Trace, max_gap_s: float = DEFAULT_MAX_GAP_S) -> list[SubTrace]:
    if max_gap_s <= 0:
        raise ValueError("max_gap_s must be positive")
    n = len(trace.points)
    if n == 0:
        return []
    gaps = np.flatnonzero(np.diff(trace.times_ms) > max_gap_s * 1000.0) + 1
    bounds = [0, *gaps.tolist(), n]
    return [
        SubTrace(trace.respondent_id, trace.points[a:b], start=a, stop=b)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
