"""Estimate-level integration of diary and app sources.

Each source yields its own :class:`SourceEstimate`. Diary distance
estimates can be corrected with the ratio of track-measured to
route-inferred distance observed on paired trips, and estimates from several
sources can be pooled into one weighted figure (macro-integration).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .harmonize import SourceTag

ALL_MODES = "ALL"


class NoMatchingTrips(ValueError):
    pass


class EmptyPairs(ValueError):
    pass


class ZeroInferredDistance(ValueError):
    pass


class SourceMismatch(ValueError):
    pass


class MixedStatistics(ValueError):
    pass


class MissingVariance(ValueError):
    pass


class Method(str, enum.Enum):
    MacroWeighted = "MacroWeighted"
    CalibratedDiary = "CalibratedDiary"


class Weighting(str, enum.Enum):
    InverseVariance = "InverseVariance"
    ByN = "ByN"
    Explicit = "Explicit"


@dataclass(frozen=True)
class SourceEstimate:
    statistic: str
    source: SourceTag
    value: float
    n: int
    variance: float | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if self.variance is not None and self.variance < 0:
            raise ValueError("variance must be non-negative")


@dataclass(frozen=True)
class CalibrationFactor:
    ratio: float
    n_pairs: int
    pair_ratios: tuple[float, ...]

    @property
    def pair_ratio_sd(self) -> float | None:
        if len(self.pair_ratios) < 2:
            return None
        m = sum(self.pair_ratios) / len(self.pair_ratios)
        return math.sqrt(sum((r - m) ** 2 for r in self.pair_ratios) / (len(self.pair_ratios) - 1))


@dataclass(frozen=True)
class IntegratedEstimate:
    statistic: str
    value: float
    components: tuple[tuple[SourceEstimate, float], ...]
    method: Method
    variance: float | None = None
    weighting: Weighting | None = None

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for _, w in self.components)


def statistic_name(mode: str) -> str:
    return "mean_trip_distance_m" if mode == ALL_MODES else f"mean_{mode.lower()}_trip_distance_m"


def estimate_mean_distance(entries: Iterable, mode: str = ALL_MODES,
                           source: SourceTag = SourceTag.Diary) -> SourceEstimate:
    """Mean trip distance over rows whose transport method matches ``mode``.

    ``entries`` are diary or harmonized rows from a single source. The
    variance is that of the mean (sample variance over n) and is absent for a
    single trip.
    """
    d = [float(e.distance_m) for e in entries if mode == ALL_MODES or e.transport_method == mode]
    n = len(d)
    if n == 0:
        raise NoMatchingTrips(f"no {mode} trips in {source.value} source")
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1) / n if n >= 2 else None
    return SourceEstimate(statistic_name(mode), SourceTag(source), mean, n, var)


def calibration_ratio(pairs: Sequence[tuple[float, float]]) -> CalibrationFactor:
    """Ratio-of-sums of actual (track) over inferred (route) distance."""
    if len(pairs) == 0:
        raise EmptyPairs("calibration needs at least one (actual, inferred) pair")
    for k, (_, inferred) in enumerate(pairs):
        if not inferred > 0:
            raise ZeroInferredDistance(f"pair {k}: inferred distance must be positive")
    actual_sum = math.fsum(a for a, _ in pairs)
    inferred_sum = math.fsum(b for _, b in pairs)
    return CalibrationFactor(
        ratio=actual_sum / inferred_sum,
        n_pairs=len(pairs),
        pair_ratios=tuple(a / b for a, b in pairs),
    )


def apply_calibration(diary_est: SourceEstimate, f: CalibrationFactor) -> IntegratedEstimate:
    """Scale a diary distance estimate by the calibration ratio.

    The ratio is treated as known, so the variance scales by ratio squared.
    """
    if diary_est.source is not SourceTag.Diary:
        raise SourceMismatch(f"calibration applies to Diary estimates, got {diary_est.source.value}")
    var = None if diary_est.variance is None else diary_est.variance * f.ratio ** 2
    return IntegratedEstimate(
        statistic=diary_est.statistic,
        value=diary_est.value * f.ratio,
        components=((diary_est, 1.0),),
        method=Method.CalibratedDiary,
        variance=var,
    )


def as_source_estimate(e: IntegratedEstimate, source: SourceTag = SourceTag.Diary) -> SourceEstimate:
    """View a calibrated estimate as a source estimate for further pooling."""
    n = sum(c.n for c, _ in e.components)
    return SourceEstimate(e.statistic, source, e.value, n, e.variance)


WeightSpec = Union[Weighting, str, Sequence[float], None]


def macro_integrate(estimates: Sequence[SourceEstimate], weighting: WeightSpec = None) -> IntegratedEstimate:
    """Weighted mean of estimates of one statistic.

    ``weighting`` is InverseVariance, ByN, or an explicit sequence of
    non-negative weights (normalised here). ``None`` picks InverseVariance
    when every estimate has a positive variance and ByN otherwise.
    """
    if not estimates:
        raise ValueError("macro_integrate needs at least one estimate")
    names = {e.statistic for e in estimates}
    if len(names) > 1:
        raise MixedStatistics(f"cannot pool different statistics: {sorted(names)}")

    if weighting is None:
        ok = all(e.variance is not None and e.variance > 0 for e in estimates)
        weighting = Weighting.InverseVariance if ok else Weighting.ByN
    if isinstance(weighting, str):
        weighting = Weighting(weighting)

    if weighting is Weighting.InverseVariance:
        if any(e.variance is None or not e.variance > 0 for e in estimates):
            raise MissingVariance("inverse-variance weighting needs a positive variance on every estimate")
        raw = [1.0 / e.variance for e in estimates]
    elif weighting is Weighting.ByN:
        raw = [float(e.n) for e in estimates]
    elif weighting is Weighting.Explicit:
        raise ValueError("pass explicit weights as a sequence of numbers")
    else:
        raw = [float(w) for w in weighting]
        if len(raw) != len(estimates):
            raise ValueError("one explicit weight per estimate required")
        weighting = Weighting.Explicit
    if any(w < 0 for w in raw) or not sum(raw) > 0:
        raise ValueError("weights must be non-negative with a positive sum")

    total = math.fsum(raw)
    w = [x / total for x in raw]
    value = math.fsum(wi * e.value for wi, e in zip(w, estimates))
    if all(e.variance is not None for e in estimates):
        var = math.fsum(wi * wi * e.variance for wi, e in zip(w, estimates))
    else:
        var = None
    return IntegratedEstimate(
        statistic=estimates[0].statistic,
        value=value,
        components=tuple(zip(estimates, w)),
        method=Method.MacroWeighted,
        variance=var,
        weighting=weighting,
    )


# --- files -----------------------------------------------------------------------------

ESTIMATE_HEADER = ("statistic", "source_or_method", "value", "n", "variance", "weights")


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def estimate_rows(items: Iterable[SourceEstimate | IntegratedEstimate | tuple[str, CalibrationFactor]]):
    for it in items:
        if isinstance(it, SourceEstimate):
            yield [it.statistic, it.source.value, _fmt(it.value), str(it.n), _fmt(it.variance), ""]
        elif isinstance(it, IntegratedEstimate):
            weights = ";".join(f"{c.source.value}:{w!r}" for c, w in it.components)
            n = sum(c.n for c, _ in it.components)
            yield [it.statistic, it.method.value, _fmt(it.value), str(n), _fmt(it.variance), weights]
        else:
            name, f = it
            sd = f.pair_ratio_sd
            yield [name, "CalibrationFactor", _fmt(f.ratio), str(f.n_pairs),
                   _fmt(None if sd is None else sd * sd), ""]


def write_estimates(path, items) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        w.writerows(estimate_rows(items))


def read_pairs(path) -> list[tuple[float, float]]:
    """Read ``actual_m,inferred_m`` columns (extra columns are ignored)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"actual_m", "inferred_m"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: pairs file needs actual_m and inferred_m columns")
        return [(float(r["actual_m"]), float(r["inferred_m"])) for r in reader]


def write_pairs(path, entries) -> None:
    """Calibration pairs from derived diary rows that recorded both distances."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent_id", "day", "trip_start", "actual_m", "inferred_m"])
        for e in entries:
            if e.track_distance_m is None or not (e.inferred_distance_m or 0) > 0:
                continue
            w.writerow([e.respondent_id, e.day, e.trip_start.strftime("%H:%M:%S"),
                        f"{e.track_distance_m:.3f}", f"{e.inferred_distance_m:.3f}"])
