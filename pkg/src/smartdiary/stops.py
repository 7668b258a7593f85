"""Spatiotemporal stop/trip segmentation of a location stream.

A stop is a run of fixes that all stay within ``radius_m`` of the run's first
fix (the anchor) for at least ``min_duration_s``. The scan starts an anchor at
index ``i``, extends to the last fix before the first excursion beyond the
radius, and either emits that window as a stop (resuming at the excursion) or
moves the anchor forward by one fix. Fixes outside stops are grouped into
maximal contiguous runs, the trips.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Union

from . import kernels
from .trajectory import DEFAULT_MAX_GAP_S, GeoPoint, SubTrace, Trace, format_timestamp, split_on_gaps


@dataclass(frozen=True)
class StopParams:
    radius_m: float = 50.0
    min_duration_s: float = 300.0

    def __post_init__(self):
        if not self.radius_m > 0 or not self.min_duration_s > 0:
            raise ValueError("radius_m and min_duration_s must both be positive")

    @property
    def min_duration_ms(self) -> int:
        return int(round(self.min_duration_s * 1000))


@dataclass(frozen=True)
class Stop:
    first: int  # inclusive index range into the SubTrace
    last: int
    centroid: tuple[float, float]
    anchor: GeoPoint
    start_t: datetime
    end_t: datetime

    @property
    def n_points(self) -> int:
        return self.last - self.first + 1


@dataclass(frozen=True)
class TripSegment:
    first: int
    last: int
    points: tuple[GeoPoint, ...]
    origin_stop: Stop | None
    dest_stop: Stop | None

    @property
    def start_t(self) -> datetime:
        return self.points[0].t

    @property
    def end_t(self) -> datetime:
        return self.points[-1].t


Item = Union[Stop, TripSegment]


@dataclass(frozen=True)
class Segmentation:
    trace: SubTrace
    items: tuple[Item, ...]

    @property
    def stops(self) -> tuple[Stop, ...]:
        return tuple(x for x in self.items if isinstance(x, Stop))

    @property
    def trips(self) -> tuple[TripSegment, ...]:
        return tuple(x for x in self.items if isinstance(x, TripSegment))

    @property
    def leading_trip_unbounded(self) -> bool:
        """The first item is a trip with no originating stop."""
        return bool(self.items) and isinstance(self.items[0], TripSegment)

    @property
    def trailing_trip_unbounded(self) -> bool:
        return bool(self.items) and isinstance(self.items[-1], TripSegment)


def _make_stop(trace: SubTrace, first: int, last: int) -> Stop:
    lats = trace.lats[first:last + 1]
    lons = trace.lons[first:last + 1]
    return Stop(
        first=first,
        last=last,
        centroid=(float(lats.mean()), float(lons.mean())),
        anchor=trace.points[first],
        start_t=trace.points[first].t,
        end_t=trace.points[last].t,
    )


def detect_stops(trace: SubTrace, params: StopParams = StopParams()) -> Segmentation:
    if not trace.points:
        raise ValueError("detect_stops needs at least one point")
    windows = kernels.stop_windows(
        trace.lats, trace.lons, trace.times_ms, params.radius_m, params.min_duration_ms
    )
    stops = [_make_stop(trace, a, b) for a, b in windows]

    items: list[Item] = []
    cursor = 0
    prev: Stop | None = None
    for stop in stops:
        if stop.first > cursor:
            items.append(TripSegment(cursor, stop.first - 1, trace.points[cursor:stop.first], prev, stop))
        items.append(stop)
        cursor = stop.last + 1
        prev = stop
    n = len(trace.points)
    if cursor < n:
        items.append(TripSegment(cursor, n - 1, trace.points[cursor:], prev, None))
    return Segmentation(trace, tuple(items))


def segment_trace(
    trace: Trace, params: StopParams = StopParams(), max_gap_s: float = DEFAULT_MAX_GAP_S
) -> list[Segmentation]:
    """Split at gaps, then segment every piece independently."""
    return [detect_stops(sub, params) for sub in split_on_gaps(trace, max_gap_s)]


def point_classes(segs: Iterable[Segmentation]) -> list[tuple[str, str, str, int]]:
    """Per-fix ``(respondent_id, timestamp, STOP|TRIP, cluster_index)`` rows.

    Stop and trip clusters are numbered separately, consecutively across the
    segmentations of one respondent and from zero for the next.
    """
    rows = []
    n_stop = n_trip = 0
    rid = None
    for seg in segs:
        if seg.trace.respondent_id != rid:
            rid = seg.trace.respondent_id
            n_stop = n_trip = 0
        for item in seg.items:
            if isinstance(item, Stop):
                cls, idx = "STOP", n_stop
                n_stop += 1
            else:
                cls, idx = "TRIP", n_trip
                n_trip += 1
            for p in seg.trace.points[item.first:item.last + 1]:
                rows.append((rid, format_timestamp(p.t), cls, idx))
    return rows


def write_point_classes(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent_id", "timestamp", "class", "cluster_index"])
        w.writerows(rows)
