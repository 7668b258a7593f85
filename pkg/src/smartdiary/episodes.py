"""Turn segmentations into diary rows.

Each trip segment becomes one :class:`DiaryEntry`: the destination stop is
reverse geocoded against an offline gazetteer, the mode comes from a median
speed heuristic, and two distances are computed. The track-measured distance
follows the recorded fixes from the origin stop centroid to the destination
stop centroid; the route-inferred distance asks a router for the distance
between those two locations (great circle unless a remote router is set).
"""
from __future__ import annotations

import csv
import enum
import math
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, replace
from datetime import datetime, time, timedelta, timezone
from typing import Callable, Iterable, Protocol, Sequence, Union

import numpy as np

from . import kernels
from .stops import Segmentation, TripSegment
from .trajectory import GeoPoint, TooFewPoints, median_speed_mps

MODE_LABELS = ("Walk", "Bike", "Car", "Train", "Unknown")
DIARY_HEADER = (
    "respondent_id", "day", "label", "address", "trip_start", "trip_end",
    "transport_method", "distance_m", "distance_kind",
)
GAZETTEER_HEADER = ("lat", "lon", "address", "label")

Location = tuple[float, float]


class DistanceKind(str, enum.Enum):
    TrackMeasured = "TrackMeasured"
    RouteInferred = "RouteInferred"
    RespondentReported = "RespondentReported"


class RouterUnavailable(RuntimeError):
    pass


class SchemaViolation(ValueError):
    def __init__(self, row: int, field: str, message: str):
        self.row, self.field = row, field
        super().__init__(f"row {row}, field {field}: {message}")


# --- gazetteer -------------------------------------------------------------------

@dataclass(frozen=True)
class GazetteerEntry:
    lat: float
    lon: float
    address: str
    label: str | None = None


@dataclass(frozen=True)
class Gazetteer:
    entries: tuple[GazetteerEntry, ...] = ()
    match_radius_m: float = 100.0

    def __post_init__(self):
        for e in self.entries:
            if not (-90 <= e.lat <= 90 and -180 <= e.lon <= 180):
                raise ValueError(f"gazetteer coordinate out of range: {e}")
            if not e.address:
                raise ValueError("gazetteer addresses must be non-empty")

    @classmethod
    def from_csv(cls, path, match_radius_m: float = 100.0) -> "Gazetteer":
        entries = []
        with open(path, newline="") as fh:
            for n, rec in enumerate(csv.reader(fh)):
                if not rec or (n == 0 and tuple(x.strip() for x in rec[:4]) == GAZETTEER_HEADER):
                    continue
                rec = list(rec) + [""] * (4 - len(rec))
                entries.append(GazetteerEntry(float(rec[0]), float(rec[1]), rec[2], rec[3] or None))
        return cls(tuple(entries), match_radius_m)


def reverse_geocode(lat: float, lon: float, g: Gazetteer) -> GazetteerEntry | None:
    """Nearest entry within the match radius; the first in file order on ties."""
    if not g.entries:
        return None
    d = kernels.distances_from(
        lat, lon, [e.lat for e in g.entries], [e.lon for e in g.entries]
    )
    k = int(np.argmin(d))
    return g.entries[k] if d[k] <= g.match_radius_m else None


# --- transport mode ----------------------------------------------------------------

@dataclass(frozen=True)
class ModeThresholds:
    """Median-speed breakpoints (m/s); ``labels[k]`` applies below ``breakpoints[k]``.

    The final label applies at or above the last breakpoint.
    """

    breakpoints: tuple[float, ...] = (2.0, 6.0, 35.0)
    labels: tuple[str, ...] = ("Walk", "Bike", "Car", "Train")

    def __post_init__(self):
        if len(self.labels) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more label than breakpoints")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        bad = set(self.labels) - set(MODE_LABELS)
        if bad:
            raise ValueError(f"unknown mode labels: {sorted(bad)}")

    def classify(self, speed_mps: float) -> str:
        for b, label in zip(self.breakpoints, self.labels):
            if speed_mps < b:
                return label
        return self.labels[-1]


ModeClassifier = Union[ModeThresholds, Callable[[Sequence[GeoPoint]], str]]


def infer_mode(seg: TripSegment | Sequence[GeoPoint], th: ModeClassifier = ModeThresholds()) -> str:
    points = seg.points if isinstance(seg, TripSegment) else seg
    if not isinstance(th, ModeThresholds):
        return th(points)
    try:
        return th.classify(median_speed_mps(points))
    except TooFewPoints:
        return "Unknown"


# --- routing ----------------------------------------------------------------------

class Router(Protocol):
    def distance_m(self, origin: Location, dest: Location, mode: str = "Walk") -> float: ...


class GreatCircleRouter:
    """Straight-line distance between endpoints; pure and always available."""

    def distance_m(self, origin: Location, dest: Location, mode: str = "Walk") -> float:
        return kernels.haversine(origin[0], origin[1], dest[0], dest[1])


class HttpRouter:
    """Client for a remote router speaking a one-line text protocol.

    Request: ``GET <url>?origin=<lat>,<lon>&dest=<lat>,<lon>&mode=<mode>``.
    Response body: the distance in meters as a decimal number.
    Responses are cached per (origin, dest, mode) with coordinates rounded to
    1e-5 degrees; the cache is shared across threads.
    """

    def __init__(self, url: str, timeout_s: float = 5.0):
        self.url = url
        self.timeout_s = timeout_s
        self._cache: dict[tuple, float] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(origin: Location, dest: Location, mode: str) -> tuple:
        return (round(origin[0], 5), round(origin[1], 5), round(dest[0], 5), round(dest[1], 5), mode)

    def distance_m(self, origin: Location, dest: Location, mode: str = "Walk") -> float:
        key = self._key(origin, dest, mode)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        query = urllib.parse.urlencode({
            "origin": f"{key[0]:.5f},{key[1]:.5f}",
            "dest": f"{key[2]:.5f},{key[3]:.5f}",
            "mode": mode,
        })
        try:
            with urllib.request.urlopen(f"{self.url}?{query}", timeout=self.timeout_s) as resp:
                value = float(resp.read().decode().strip())
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise RouterUnavailable(f"{self.url}: {exc}") from exc
        if not value >= 0:
            raise RouterUnavailable(f"{self.url}: negative distance {value}")
        with self._lock:
            self._cache[key] = value
        return value


def inferred_distance_m(origin: Location, dest: Location, router: Router | None = None,
                        mode: str = "Walk", fallback: bool = False) -> float:
    router = router or GreatCircleRouter()
    try:
        return router.distance_m(origin, dest, mode)
    except RouterUnavailable:
        if not fallback:
            raise
        return GreatCircleRouter().distance_m(origin, dest, mode)


# --- diary rows ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiaryEntry:
    respondent_id: str
    day: str
    trip_start: time
    trip_end: time
    transport_method: str
    distance_m: float
    distance_kind: DistanceKind | None = DistanceKind.TrackMeasured
    label: str | None = None
    address: str | None = None
    # not emitted; kept for calibration pairs and diagnostics
    inferred_distance_m: float | None = field(default=None, compare=False)
    track_distance_m: float | None = field(default=None, compare=False)
    origin_address: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.trip_start > self.trip_end:
            raise ValueError(f"trip_start {self.trip_start} after trip_end {self.trip_end}")
        if not self.distance_m >= 0:
            raise ValueError("distance_m must be non-negative")


def parse_offset(text: str | timedelta | None) -> timedelta:
    """``+02:00`` / ``-0530`` / ``Z`` / minutes as number -> timedelta."""
    if text is None:
        return timedelta(0)
    if isinstance(text, timedelta):
        return text
    if isinstance(text, (int, float)):
        return timedelta(minutes=text)
    s = str(text).strip()
    if s in ("Z", "z", "UTC", ""):
        return timedelta(0)
    sign = -1 if s[0] == "-" else 1
    body = s.lstrip("+-").replace(":", "")
    if not body.isdigit() or len(body) not in (2, 4):
        raise ValueError(f"bad UTC offset: {text!r}")
    return sign * timedelta(hours=int(body[:2]), minutes=int(body[2:] or 0))


def localize(t: datetime, tz_offset: timedelta) -> datetime:
    return t.astimezone(timezone(tz_offset)).replace(tzinfo=None)


def _track(trip: TripSegment) -> tuple[Location, Location, float]:
    lats = [p.lat for p in trip.points]
    lons = [p.lon for p in trip.points]
    if trip.origin_stop is not None:
        origin = trip.origin_stop.centroid
        lats.insert(0, origin[0])
        lons.insert(0, origin[1])
    else:
        origin = (lats[0], lons[0])
    if trip.dest_stop is not None:
        dest = trip.dest_stop.centroid
        lats.append(dest[0])
        lons.append(dest[1])
    else:
        dest = (lats[-1], lons[-1])
    return origin, dest, kernels.path_length(lats, lons)


def build_diary(
    segmentations: Iterable[Segmentation],
    gazetteer: Gazetteer = Gazetteer(),
    thresholds: ModeClassifier = ModeThresholds(),
    router: Router | None = None,
    tz_offset: timedelta | str = timedelta(0),
    *,
    emit_kind: DistanceKind = DistanceKind.TrackMeasured,
    router_fallback: bool = True,
    route_via_addresses: bool = True,
) -> list[DiaryEntry]:
    """One diary row per trip segment, sorted by (respondent, day, start).

    The route-inferred distance runs between the bounding stop centroids, or
    between the matched gazetteer coordinates when ``route_via_addresses``
    and the stop geocoded to an address.
    """
    offset = parse_offset(tz_offset)
    out = []
    for seg in segmentations:
        rid = seg.trace.respondent_id
        for trip in seg.trips:
            origin, dest, track_m = _track(trip)
            mode = infer_mode(trip, thresholds)
            place = reverse_geocode(*dest, gazetteer) if trip.dest_stop is not None else None
            came_from = reverse_geocode(*origin, gazetteer) if trip.origin_stop is not None else None
            if route_via_addresses:
                origin = (came_from.lat, came_from.lon) if came_from else origin
                dest = (place.lat, place.lon) if place else dest
            route_m = inferred_distance_m(origin, dest, router, mode, fallback=router_fallback)
            start = localize(trip.start_t, offset)
            end = localize(trip.end_t, offset)
            # a diary row lives on one day; clamp trips running past midnight
            out.append(DiaryEntry(
                respondent_id=rid,
                day=start.date().isoformat(),
                trip_start=start.time(),
                trip_end=end.time() if end.date() == start.date() else time.max,
                transport_method=mode,
                distance_m=track_m if emit_kind == DistanceKind.TrackMeasured else route_m,
                distance_kind=emit_kind,
                label=place.label if place else None,
                address=place.address if place else None,
                inferred_distance_m=route_m,
                track_distance_m=track_m,
                origin_address=came_from.address if came_from else None,
            ))
    out.sort(key=lambda e: (e.respondent_id, e.day, e.trip_start))
    return out


# --- file format -----------------------------------------------------------------------

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def format_hhmm(t: time) -> str:
    return f"{t.hour:02d}:{t.minute:02d}"


def parse_clock(text: str) -> time:
    parts = text.strip().split(":")
    if len(parts) not in (2, 3) or not all(p.replace(".", "", 1).isdigit() for p in parts):
        raise ValueError(f"not a HH:MM time: {text!r}")
    h, m = int(parts[0]), int(parts[1])
    if len(parts) == 3:
        sec = float(parts[2])
        return time(h, m, int(sec), int(round((sec - int(sec)) * 1e6)))
    return time(h, m)


def diary_record(e: DiaryEntry) -> list[str]:
    """Emission form: times truncated to minutes, distance to whole meters."""
    return [
        e.respondent_id, str(e.day), e.label or "", e.address or "",
        format_hhmm(e.trip_start), format_hhmm(e.trip_end), e.transport_method,
        str(round_half_up(e.distance_m)), e.distance_kind.value if e.distance_kind else "",
    ]


def write_diary(path, entries: Iterable[DiaryEntry]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIARY_HEADER)
        for e in entries:
            w.writerow(diary_record(e))


def read_diary(path, default_kind: DistanceKind | None = DistanceKind.RespondentReported) -> list[DiaryEntry]:
    """Read either diary layout.

    The traditional-diary layout lacks ``distance_kind`` (rows then get
    ``default_kind``); ``address`` may be absent or empty. Values are kept
    verbatim apart from type conversion. Raises SchemaViolation.
    """
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        required = {"respondent_id", "day", "trip_start", "trip_end", "transport_method", "distance_m"}
        missing = required - cols
        if missing:
            raise SchemaViolation(0, sorted(missing)[0], "column missing from header")
        for n, rec in enumerate(reader, start=1):
            entries.append(entry_from_record(rec, n, default_kind))
    return entries


def entry_from_record(rec: dict, n: int, default_kind: DistanceKind | None) -> DiaryEntry:
    def get(name):
        v = rec.get(name)
        return v.strip() if isinstance(v, str) and v.strip() != "" else None

    for name in ("respondent_id", "day", "transport_method"):
        if get(name) is None:
            raise SchemaViolation(n, name, "required field is empty")
    try:
        start = parse_clock(get("trip_start") or "")
    except ValueError as exc:
        raise SchemaViolation(n, "trip_start", str(exc)) from None
    try:
        end = parse_clock(get("trip_end") or "")
    except ValueError as exc:
        raise SchemaViolation(n, "trip_end", str(exc)) from None
    if start > end:
        raise SchemaViolation(n, "trip_end", "trip ends before it starts")
    try:
        dist = float((get("distance_m") or "").rstrip("m"))
    except ValueError:
        raise SchemaViolation(n, "distance_m", f"not a number: {rec.get('distance_m')!r}") from None
    if not dist >= 0:
        raise SchemaViolation(n, "distance_m", "negative distance")
    kind = default_kind
    if get("distance_kind"):
        try:
            kind = DistanceKind(get("distance_kind"))
        except ValueError:
            raise SchemaViolation(n, "distance_kind", f"unknown kind {get('distance_kind')!r}") from None
    return DiaryEntry(
        respondent_id=get("respondent_id"), day=get("day"), trip_start=start, trip_end=end,
        transport_method=get("transport_method"), distance_m=dist, distance_kind=kind,
        label=get("label"), address=get("address"),
    )


def with_distance(e: DiaryEntry, kind: DistanceKind) -> DiaryEntry:
    """Swap the emitted distance for the other recorded kind."""
    value = e.track_distance_m if kind == DistanceKind.TrackMeasured else e.inferred_distance_m
    if value is None:
        raise ValueError(f"entry has no {kind.value} distance recorded")
    return replace(e, distance_m=value, distance_kind=kind)
