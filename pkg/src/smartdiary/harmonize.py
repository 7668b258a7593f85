"""Mixed-mode integration: stack diary and app rows in one schema.

Rows from both sources are normalised to the diary granularity (HH:MM times,
whole meters), tagged with their source and sorted. No record linkage is
attempted. :func:`mode_effect_report` summarises each source and the
App minus Diary differences.
"""
from __future__ import annotations

import csv
import enum
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import time
from typing import Mapping, Sequence

from .episodes import (
    DiaryEntry,
    DistanceKind,
    SchemaViolation,
    format_hhmm,
    parse_clock,
    round_half_up,
)

HARMONIZED_HEADER = (
    "respondent_id", "day", "mode", "label", "address", "trip_start", "trip_end",
    "transport_method", "distance_m",
)


class SourceTag(str, enum.Enum):
    Diary = "Diary"
    App = "App"

    @property
    def other(self) -> "SourceTag":
        return SourceTag.App if self is SourceTag.Diary else SourceTag.Diary


@dataclass(frozen=True)
class HarmonizedRow:
    respondent_id: str
    day: str
    source: SourceTag
    label: str | None
    address: str | None
    trip_start: time
    trip_end: time
    transport_method: str
    distance_m: int

    def __post_init__(self):
        if self.trip_start > self.trip_end:
            raise ValueError("trip_start after trip_end")
        if self.distance_m < 0:
            raise ValueError("negative distance")

    def values(self) -> dict[str, object]:
        return {
            "respondent_id": self.respondent_id, "day": self.day, "mode": self.source.value,
            "label": self.label, "address": self.address, "trip_start": self.trip_start,
            "trip_end": self.trip_end, "transport_method": self.transport_method,
            "distance_m": self.distance_m,
        }


def _day_key(day: str):
    return (0, int(day), "") if day.isdigit() else (1, 0, day)


def _row_key(r: HarmonizedRow):
    return (
        r.respondent_id, _day_key(r.day), r.trip_start, r.source is SourceTag.App, r.trip_end,
        r.transport_method, r.distance_m, r.label or "", r.address or "",
    )


@dataclass(frozen=True)
class HarmonizedDataset:
    rows: tuple[HarmonizedRow, ...] = ()
    missing_mask: tuple[Mapping[str, bool], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mask = tuple({k: v is None for k, v in r.values().items()} for r in self.rows)
        object.__setattr__(self, "missing_mask", mask)

    def __len__(self) -> int:
        return len(self.rows)

    def by_source(self, source: SourceTag) -> list[HarmonizedRow]:
        return [r for r in self.rows if r.source is source]

    def split_by_source(self) -> tuple[list[DiaryEntry], list[DiaryEntry]]:
        """Strip the source tag; returns ``(diary_entries, app_entries)``."""
        def back(r: HarmonizedRow) -> DiaryEntry:
            return DiaryEntry(
                respondent_id=r.respondent_id, day=r.day, trip_start=r.trip_start,
                trip_end=r.trip_end, transport_method=r.transport_method,
                distance_m=float(r.distance_m),
                distance_kind=DistanceKind.RespondentReported if r.source is SourceTag.Diary else None,
                label=r.label, address=r.address,
            )
        return ([back(r) for r in self.by_source(SourceTag.Diary)],
                [back(r) for r in self.by_source(SourceTag.App)])

    def swap_sources(self) -> "HarmonizedDataset":
        return HarmonizedDataset(tuple(sorted(
            (replace(r, source=r.source.other) for r in self.rows), key=_row_key)))


def _normalize(e: DiaryEntry, source: SourceTag, n: int, keep_label: bool) -> HarmonizedRow:
    for name in ("respondent_id", "day", "transport_method"):
        v = getattr(e, name)
        if v is None or str(v).strip() == "":
            raise SchemaViolation(n, name, "required field is empty")
    if not e.distance_m >= 0:
        raise SchemaViolation(n, "distance_m", "negative distance")
    start = e.trip_start.replace(second=0, microsecond=0)
    end = e.trip_end.replace(second=0, microsecond=0)
    if start > end:
        raise SchemaViolation(n, "trip_end", "trip ends before it starts")
    return HarmonizedRow(
        respondent_id=str(e.respondent_id), day=str(e.day), source=source,
        label=e.label if keep_label else None, address=e.address or None,
        trip_start=start, trip_end=end, transport_method=e.transport_method,
        distance_m=round_half_up(e.distance_m),
    )


def harmonize(diary_rows: Sequence[DiaryEntry], app_rows: Sequence[DiaryEntry],
              keep_app_labels: bool = False) -> HarmonizedDataset:
    """Union of both sources in the combined schema.

    App labels are dropped unless ``keep_app_labels``. SchemaViolation row
    numbers are 1-based within the offending input.
    """
    rows = [_normalize(e, SourceTag.Diary, n, True) for n, e in enumerate(diary_rows, 1)]
    rows += [_normalize(e, SourceTag.App, n, keep_app_labels) for n, e in enumerate(app_rows, 1)]
    rows.sort(key=_row_key)
    return HarmonizedDataset(tuple(rows))


# --- mode-effect report ---------------------------------------------------------------

@dataclass(frozen=True)
class SourceSummary:
    source: SourceTag
    trip_count: int
    respondent_days: int
    mean_trips_per_respondent_day: float | None
    mean_duration_min: float | None
    mean_distance_m: float | None
    mode_shares: Mapping[str, float]

    @property
    def empty(self) -> bool:
        return self.trip_count == 0

    def variable(self, name: str) -> float | None:
        if name.startswith("share:"):
            return self.mode_shares.get(name[6:], 0.0) if not self.empty else None
        return getattr(self, name)


@dataclass(frozen=True)
class ModeEffectReport:
    diary: SourceSummary
    app: SourceSummary
    differences: Mapping[str, float | None]
    relative_differences: Mapping[str, float | None]

    @property
    def variables(self) -> list[str]:
        return list(self.differences)


def _minutes(t: time) -> int:
    return t.hour * 60 + t.minute


def summarize(rows: Sequence[HarmonizedRow], source: SourceTag) -> SourceSummary:
    n = len(rows)
    days = {(r.respondent_id, r.day) for r in rows}
    modes = Counter(r.transport_method for r in rows)
    return SourceSummary(
        source=source,
        trip_count=n,
        respondent_days=len(days),
        mean_trips_per_respondent_day=n / len(days) if days else None,
        mean_duration_min=sum(_minutes(r.trip_end) - _minutes(r.trip_start) for r in rows) / n if n else None,
        mean_distance_m=sum(r.distance_m for r in rows) / n if n else None,
        mode_shares={m: c / n for m, c in sorted(modes.items())},
    )


def mode_effect_report(ds: HarmonizedDataset) -> ModeEffectReport:
    diary = summarize(ds.by_source(SourceTag.Diary), SourceTag.Diary)
    app = summarize(ds.by_source(SourceTag.App), SourceTag.App)
    names = ["trip_count", "mean_trips_per_respondent_day", "mean_duration_min", "mean_distance_m"]
    names += [f"share:{m}" for m in sorted(set(diary.mode_shares) | set(app.mode_shares))]
    diffs, rel = {}, {}
    for name in names:
        a, d = app.variable(name), diary.variable(name)
        if a is None or d is None:
            diffs[name] = rel[name] = None
            continue
        diffs[name] = a - d
        rel[name] = (a - d) / d if d != 0 else None
    return ModeEffectReport(diary, app, diffs, rel)


# --- formatting and files ----------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, time):
        return format_hhmm(v)
    return str(v)


def _align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def format_table(ds: HarmonizedDataset) -> str:
    """Aligned text rendering; absent fields show as ``-``, distances as ``210m``."""
    head = ["Respondent", "Day", "Mode", "Where did you go?", "Address", "Trip start",
            "Trip end", "Transp. method", "Distance"]
    body = [
        [r.respondent_id, r.day, r.source.value, _cell(r.label), _cell(r.address),
         _cell(r.trip_start), _cell(r.trip_end), r.transport_method, f"{r.distance_m}m"]
        for r in ds.rows
    ]
    return _align([head, *body])


def _num(v) -> str:
    if v is None:
        return "EMPTY"
    return f"{v:d}" if isinstance(v, int) else f"{v:.4g}"


def format_report(rep: ModeEffectReport) -> str:
    head = ["variable", "Diary", "App", "App-Diary", "relative"]
    body = []
    for name in rep.variables:
        rel = rep.relative_differences[name]
        body.append([
            name, _num(rep.diary.variable(name)), _num(rep.app.variable(name)),
            "n/a" if rep.differences[name] is None else _num(rep.differences[name]),
            "n/a" if rel is None else f"{rel:+.1%}",
        ])
    return _align([head, *body])


def write_harmonized(path, ds: HarmonizedDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HARMONIZED_HEADER)
        for r in ds.rows:
            v = r.values()
            w.writerow(["" if v[k] is None else _cell(v[k]) for k in HARMONIZED_HEADER])


def read_harmonized(path) -> HarmonizedDataset:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(HARMONIZED_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise SchemaViolation(0, sorted(missing)[0], "column missing from header")
        for n, rec in enumerate(reader, 1):
            try:
                source = SourceTag(rec["mode"].strip())
            except ValueError:
                raise SchemaViolation(n, "mode", f"unknown source {rec['mode']!r}") from None
            try:
                start, end = parse_clock(rec["trip_start"]), parse_clock(rec["trip_end"])
                dist = int(rec["distance_m"])
                rows.append(HarmonizedRow(
                    rec["respondent_id"], rec["day"], source, rec["label"] or None,
                    rec["address"] or None, start, end, rec["transport_method"], dist,
                ))
            except ValueError as exc:
                raise SchemaViolation(n, "row", str(exc)) from None
    return HarmonizedDataset(tuple(sorted(rows, key=_row_key)))

