"""Ground-truth mobility and paired sensor/diary observations.

A scenario lists stays and the trips between them. Trips follow their
waypoint polyline at a constant mode speed, so the whole day is a pure
function of the scenario. The sensor model samples that timeline at a fixed
interval with isotropic planar noise and random dropout; the diary model
forgets short trips more often and rounds reported times outward to a grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .episodes import DiaryEntry, DistanceKind, parse_offset
from .trajectory import EARTH_RADIUS_M, GeoPoint, Trace, from_ms, to_ms

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODE_SPEED_MPS = {"Walk": 1.4, "Bike": 4.5, "Car": 13.0, "Train": 30.0}
# one-way trip length ranges for randomly generated scenarios, meters
MODE_LENGTH_M = {"Walk": (800, 2000), "Bike": (1500, 5000), "Car": (4000, 15000), "Train": (15000, 40000)}
BUNDLED = ("worked_example", "twenty_trips")

Location = tuple[float, float]


class InvalidScenario(ValueError):
    pass


# --- scenario ---------------------------------------------------------------------

@dataclass(frozen=True)
class StaySpec:
    lat: float
    lon: float
    label: str | None = None
    address: str | None = None
    start: time | None = None
    end: time | None = None
    duration_s: float | None = None


@dataclass(frozen=True)
class TripSpec:
    mode: str
    waypoints: tuple[Location, ...] = ()


@dataclass(frozen=True)
class RandomSpec:
    respondents: int = 1
    trips: int = 20
    modes: tuple[str, ...] = ("Walk", "Bike", "Car", "Train")
    dwell_s: tuple[float, float] = (900.0, 3600.0)
    start: time = time(7, 0)
    origin: Location = (52.09, 5.12)


@dataclass(frozen=True)
class Scenario:
    name: str
    respondent_id: str
    day: date
    tz_offset: timedelta
    stays: tuple[StaySpec, ...] = ()
    trips: tuple[TripSpec, ...] = ()
    observe_start: time | None = None
    observe_end: time | None = None
    random: RandomSpec | None = None


def _clock(v, what: str) -> time:
    if isinstance(v, time):
        return v
    try:
        return time.fromisoformat(str(v))
    except ValueError:
        raise InvalidScenario(f"{what}: not a clock time: {v!r}") from None


def scenario_from_dict(d: dict, name: str = "scenario") -> Scenario:
    try:
        day = d["date"]
        day = day if isinstance(day, date) else date.fromisoformat(str(day))
        tz = parse_offset(d.get("timezone", "+00:00"))
        stays = []
        for k, s in enumerate(d.get("stay", [])):
            stays.append(StaySpec(
                lat=float(s["lat"]), lon=float(s["lon"]), label=s.get("label") or None,
                address=s.get("address") or None,
                start=_clock(s["start"], f"stay {k}.start") if "start" in s else None,
                end=_clock(s["end"], f"stay {k}.end") if "end" in s else None,
                duration_s=float(s["duration_s"]) if "duration_s" in s else None,
            ))
        trips = [
            TripSpec(str(t["mode"]), tuple((float(a), float(b)) for a, b in t.get("waypoints", [])))
            for t in d.get("trip", [])
        ]
        obs = d.get("observation", {})
        rnd = None
        if "random" in d:
            r = d["random"]
            rnd = RandomSpec(
                respondents=int(r.get("respondents", 1)), trips=int(r.get("trips", 20)),
                modes=tuple(r.get("modes", RandomSpec.modes)),
                dwell_s=tuple(float(x) for x in r.get("dwell_s", RandomSpec.dwell_s)),
                start=_clock(r.get("start", "07:00:00"), "random.start"),
                origin=tuple(float(x) for x in r.get("origin", RandomSpec.origin)),
            )
        sc = Scenario(
            name=str(d.get("name", name)), respondent_id=str(d.get("respondent_id", "R001")),
            day=day, tz_offset=tz, stays=tuple(stays), trips=tuple(trips),
            observe_start=_clock(obs["start"], "observation.start") if "start" in obs else None,
            observe_end=_clock(obs["end"], "observation.end") if "end" in obs else None,
            random=rnd,
        )
    except InvalidScenario:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"{name}: {exc!r}") from None
    _check(sc)
    return sc


def _check(sc: Scenario) -> None:
    if sc.random is not None:
        r = sc.random
        if r.respondents < 1 or r.trips < 0 or not r.modes or r.dwell_s[0] <= 0 or r.dwell_s[1] < r.dwell_s[0]:
            raise InvalidScenario(f"{sc.name}: bad [random] section")
        if set(r.modes) - set(MODE_SPEED_MPS):
            raise InvalidScenario(f"{sc.name}: unknown modes {sorted(set(r.modes) - set(MODE_SPEED_MPS))}")
        return
    if not sc.stays:
        raise InvalidScenario(f"{sc.name}: needs at least one stay")
    if len(sc.trips) != len(sc.stays) - 1:
        raise InvalidScenario(f"{sc.name}: {len(sc.stays)} stays need {len(sc.stays) - 1} trips, got {len(sc.trips)}")
    if sc.stays[0].start is None:
        raise InvalidScenario(f"{sc.name}: the first stay needs a start time")
    for k, s in enumerate(sc.stays):
        if s.end is None and s.duration_s is None:
            raise InvalidScenario(f"{sc.name}: stay {k} needs end or duration_s")
        if not (-90 <= s.lat <= 90 and -180 <= s.lon <= 180):
            raise InvalidScenario(f"{sc.name}: stay {k} coordinates out of range")
    for k, t in enumerate(sc.trips):
        if t.mode not in MODE_SPEED_MPS:
            raise InvalidScenario(f"{sc.name}: trip {k} has unknown mode {t.mode!r}")


def load_scenario(source) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    if str(source) in BUNDLED:
        text = resources.files("smartdiary").joinpath("data", f"{source}.toml").read_text()
        name = str(source)
    else:
        text = Path(source).read_text()
        name = Path(source).stem
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidScenario(f"{name}: {exc}") from None
    return scenario_from_dict(d, name)


# --- truth ------------------------------------------------------------------------------

@dataclass(frozen=True)
class TruthStay:
    location: Location
    label: str | None
    address: str | None
    start: datetime
    end: datetime


@dataclass(frozen=True)
class TruthTrip:
    polyline: tuple[Location, ...]
    mode: str
    start: datetime
    end: datetime
    length_m: float

    def position_at(self, t_ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lat = np.array([p[0] for p in self.polyline])
        lon = np.array([p[1] for p in self.polyline])
        cum = np.concatenate([[0.0], np.cumsum(kernels.consecutive_distances(lat, lon))])
        s0, s1 = to_ms(self.start), to_ms(self.end)
        frac = np.clip((np.asarray(t_ms, dtype=np.float64) - s0) / max(s1 - s0, 1), 0.0, 1.0)
        s = frac * cum[-1]
        return np.interp(s, cum, lat), np.interp(s, cum, lon)


@dataclass(frozen=True)
class TruthEpisode:
    respondent_id: str
    stays: tuple[TruthStay, ...]
    trips: tuple[TruthTrip, ...]
    tz_offset: timedelta = timedelta(0)
    observe_start: datetime | None = None
    observe_end: datetime | None = None

    @property
    def start(self) -> datetime:
        return self.observe_start or self.stays[0].start

    @property
    def end(self) -> datetime:
        return self.observe_end or self.stays[-1].end

    def observed_trips(self) -> list[TruthTrip]:
        return [t for t in self.trips if t.start >= self.start and t.end <= self.end]


def _utc(day: date, clock: time, tz: timedelta) -> datetime:
    return datetime.combine(day, clock, tzinfo=timezone(tz)).astimezone(timezone.utc)


def _round_ms(t: datetime) -> datetime:
    return from_ms(round((t - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds() * 1000))


def _offset(loc: Location, north_m: float, east_m: float) -> Location:
    lat = loc[0] + math.degrees(north_m / EARTH_RADIUS_M)
    lon = loc[1] + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(loc[0]))))
    return (lat, lon)


def _random_stays(sc: Scenario, rng: np.random.Generator) -> tuple[list[StaySpec], list[TripSpec]]:
    r = sc.random
    here = r.origin
    stays, trips = [], []
    names = ["Home", "Work", "School", "Shop", "Gym", "Friend", "Cafe", "Doctor"]
    for k in range(r.trips + 1):
        dwell = float(rng.uniform(*r.dwell_s))
        stays.append(StaySpec(
            lat=here[0], lon=here[1], label=names[k % len(names)], address=f"{k + 1} Sim St.",
            start=r.start if k == 0 else None, duration_s=dwell,
        ))
        if k == r.trips:
            break
        mode = r.modes[int(rng.integers(len(r.modes)))]
        length = float(rng.uniform(*MODE_LENGTH_M[mode]))
        bearing = float(rng.uniform(0, 2 * math.pi))
        side = float(rng.uniform(-0.2, 0.2)) * length
        # one dog-leg waypoint half way, offset sideways
        mid = _offset(here, 0.5 * length * math.cos(bearing) - side * math.sin(bearing),
                      0.5 * length * math.sin(bearing) + side * math.cos(bearing))
        dest = _offset(here, length * math.cos(bearing), length * math.sin(bearing))
        trips.append(TripSpec(mode, (mid,)))
        here = dest
    return stays, trips


def _episode(rid: str, sc: Scenario, stays: Sequence[StaySpec], trips: Sequence[TripSpec]) -> TruthEpisode:
    tz = sc.tz_offset
    t = _utc(sc.day, stays[0].start, tz)
    out_stays, out_trips = [], []
    for k, s in enumerate(stays):
        if s.end is not None:
            end = _utc(sc.day, s.end, tz)
        else:
            end = _round_ms(t + timedelta(seconds=s.duration_s))
        if end <= t:
            raise InvalidScenario(f"{sc.name}: stay {k} ends at or before its arrival")
        out_stays.append(TruthStay((s.lat, s.lon), s.label, s.address, t, end))
        t = end
        if k < len(trips):
            nxt = stays[k + 1]
            poly = ((s.lat, s.lon), *trips[k].waypoints, (nxt.lat, nxt.lon))
            length = kernels.path_length([p[0] for p in poly], [p[1] for p in poly])
            arrive = _round_ms(t + timedelta(seconds=length / MODE_SPEED_MPS[trips[k].mode]))
            out_trips.append(TruthTrip(poly, trips[k].mode, t, arrive, length))
            t = arrive
    lo = _utc(sc.day, sc.observe_start, tz) if sc.observe_start else None
    hi = _utc(sc.day, sc.observe_end, tz) if sc.observe_end else None
    if (lo and lo < out_stays[0].start) or (hi and hi > out_stays[-1].end) or (lo and hi and hi <= lo):
        raise InvalidScenario(f"{sc.name}: observation window must lie inside the simulated day")
    return TruthEpisode(rid, tuple(out_stays), tuple(out_trips), tz, lo, hi)


def generate_truth(scenario: Scenario, seed: int = 0) -> list[TruthEpisode]:
    """One episode per respondent; random scenarios draw from ``seed``."""
    if scenario.random is None:
        return [_episode(scenario.respondent_id, scenario, scenario.stays, scenario.trips)]
    rng = np.random.default_rng([seed, 0])
    eps = []
    for k in range(scenario.random.respondents):
        stays, trips = _random_stays(scenario, rng)
        rid = scenario.respondent_id if scenario.random.respondents == 1 else f"{scenario.respondent_id}-{k + 1:03d}"
        eps.append(_episode(rid, scenario, stays, trips))
    return eps


# --- sensor ------------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorModel:
    sampling_interval_s: float = 10.0
    gps_noise_sigma_m: float = 5.0
    dropout: float = 0.0

    def __post_init__(self):
        if not self.sampling_interval_s >= 0.001:
            raise ValueError("sampling_interval_s must be at least 1 ms")
        if not self.gps_noise_sigma_m >= 0:
            raise ValueError("gps_noise_sigma_m must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


def truth_positions(ep: TruthEpisode, t_ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lat = np.empty(len(t_ms))
    lon = np.empty(len(t_ms))
    for s in ep.stays:
        m = (t_ms >= to_ms(s.start)) & (t_ms <= to_ms(s.end))
        lat[m], lon[m] = s.location
    for tr in ep.trips:
        m = (t_ms > to_ms(tr.start)) & (t_ms < to_ms(tr.end))
        if m.any():
            lat[m], lon[m] = tr.position_at(t_ms[m])
    return lat, lon


def sensor_observe(ep: TruthEpisode, m: SensorModel = SensorModel(), seed=0) -> Trace:
    """Sample the truth timeline; noise and dropout draws do not depend on sigma."""
    step = int(round(m.sampling_interval_s * 1000))
    t_ms = np.arange(to_ms(ep.start), to_ms(ep.end) + 1, step, dtype=np.int64)
    lat, lon = truth_positions(ep, t_ms)
    rng = np.random.default_rng(seed)
    keep = rng.random(len(t_ms)) >= m.dropout
    z = rng.standard_normal((len(t_ms), 2)) * m.gps_noise_sigma_m
    lon = lon + np.degrees(z[:, 1] / (EARTH_RADIUS_M * np.cos(np.radians(lat))))
    lat = np.clip(lat + np.degrees(z[:, 0] / EARTH_RADIUS_M), -90.0, 90.0)
    lon = np.where(lon > 180.0, lon - 360.0, np.where(lon < -180.0, lon + 360.0, lon))
    points = tuple(
        GeoPoint(float(a), float(b), from_ms(int(t)))
        for a, b, t, k in zip(lat, lon, t_ms, keep) if k
    )
    return Trace(ep.respondent_id, points)


# --- diary -------------------------------------------------------------------------------

@dataclass(frozen=True)
class DiaryModel:
    """Respondent reporting model.

    A trip of true length L is forgotten with probability
    ``p0 * exp(-L / lambda_m)``. Reported start times round down and end
    times round up to a ``time_rounding_min`` grid. ``StraightLine`` reports
    the endpoint great-circle distance, ``TruthRounded`` the true length
    rounded to the nearest 100 m.
    """

    time_rounding_min: int = 5
    p0: float = 0.5
    lambda_m: float = 500.0
    distance_report: str = "StraightLine"

    def __post_init__(self):
        if self.time_rounding_min < 1:
            raise ValueError("time_rounding_min must be at least 1")
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must be in [0, 1]")
        if not self.lambda_m > 0:
            raise ValueError("lambda_m must be positive")
        if self.distance_report not in ("StraightLine", "TruthRounded"):
            raise ValueError(f"unknown distance_report {self.distance_report!r}")

    def omission_probability(self, length_m: float) -> float:
        return self.p0 * math.exp(-length_m / self.lambda_m)


def _grid(t: datetime, minutes: int, up: bool) -> datetime:
    midnight = t.replace(hour=0, minute=0, second=0, microsecond=0)
    step = timedelta(minutes=minutes)
    n = (t - midnight) // step
    out = midnight + n * step
    if up and out < t:
        out += step
    return out


def diary_observe(ep: TruthEpisode, m: DiaryModel = DiaryModel(), seed=0) -> list[DiaryEntry]:
    rng = np.random.default_rng(seed)
    local = timezone(ep.tz_offset)
    out = []
    for tr in ep.observed_trips():
        u = rng.random()
        if u < m.omission_probability(tr.length_m):
            continue
        start = _grid(tr.start.astimezone(local).replace(tzinfo=None), m.time_rounding_min, up=False)
        end = _grid(tr.end.astimezone(local).replace(tzinfo=None), m.time_rounding_min, up=True)
        end_clock = end.time() if end.date() == start.date() else time(23, 59)
        if m.distance_report == "StraightLine":
            a, b = tr.polyline[0], tr.polyline[-1]
            dist = kernels.haversine(a[0], a[1], b[0], b[1])
        else:
            dist = round(tr.length_m / 100.0) * 100.0
        dest = next(s for s in ep.stays if s.start == tr.end)
        out.append(DiaryEntry(
            respondent_id=ep.respondent_id, day=start.date().isoformat(),
            trip_start=start.time(), trip_end=end_clock, transport_method=tr.mode,
            distance_m=dist, distance_kind=DistanceKind.RespondentReported,
            label=dest.label, address=dest.address,
        ))
    return out


# --- recovery -----------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryMetrics:
    n_truth: int
    n_derived: int
    n_matched: int
    recall: float | None
    precision: float | None
    start_mae_s: float | None
    end_mae_s: float | None
    distance_rel_error: float | None
    pairs: tuple[tuple[int, int], ...] = field(default=(), repr=False)

    @property
    def empty(self) -> bool:
        return self.n_truth == 0 or self.n_derived == 0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "n_truth", "n_derived", "n_matched", "recall", "precision",
            "start_mae_s", "end_mae_s", "distance_rel_error")}


def _derived_interval(e: DiaryEntry, tz: timedelta) -> tuple[float, float]:
    day = date.fromisoformat(str(e.day))
    z = timezone(tz)
    a = datetime.combine(day, e.trip_start, tzinfo=z)
    b = datetime.combine(day, e.trip_end, tzinfo=z)
    return a.timestamp(), b.timestamp()


def evaluate_recovery(truth: Sequence[TruthEpisode] | TruthEpisode, derived: Sequence[DiaryEntry],
                      min_overlap: float = 0.5) -> RecoveryMetrics:
    """Greedy one-to-one matching of derived rows to observed truth trips.

    A pair is eligible when their time overlap is at least ``min_overlap`` of
    the longer of the two intervals; pairs are taken in order of decreasing
    overlap. Distance error compares the track-measured distance when the row
    recorded one.
    """
    episodes = [truth] if isinstance(truth, TruthEpisode) else list(truth)
    tz_by_rid = {ep.respondent_id: ep.tz_offset for ep in episodes}
    tt = [(ep.respondent_id, tr) for ep in episodes for tr in ep.observed_trips()]
    dd = [e for e in derived if e.respondent_id in tz_by_rid]
    t_iv = [(tr.start.timestamp(), tr.end.timestamp()) for _, tr in tt]
    d_iv = [_derived_interval(e, tz_by_rid[e.respondent_id]) for e in dd]

    cand = []
    for i, (rid, _) in enumerate(tt):
        ta, tb = t_iv[i]
        for j, e in enumerate(dd):
            if e.respondent_id != rid:
                continue
            da, db = d_iv[j]
            ov = min(tb, db) - max(ta, da)
            longest = max(tb - ta, db - da)
            if ov > 0 and longest > 0 and ov >= min_overlap * longest:
                cand.append((-ov, i, j))
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, i, j in cand:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        pairs.append((i, j))
    pairs.sort()

    nt, nd, nm = len(tt), len(dd), len(pairs)
    if nm:
        start_mae = sum(abs(d_iv[j][0] - t_iv[i][0]) for i, j in pairs) / nm
        end_mae = sum(abs(d_iv[j][1] - t_iv[i][1]) for i, j in pairs) / nm
        rel = []
        for i, j in pairs:
            e, tr = dd[j], tt[i][1]
            got = e.track_distance_m if e.track_distance_m is not None else e.distance_m
            rel.append(abs(got - tr.length_m) / tr.length_m)
        dist_err = sum(rel) / nm
    else:
        start_mae = end_mae = dist_err = None
    return RecoveryMetrics(
        n_truth=nt, n_derived=nd, n_matched=nm,
        recall=nm / nt if nt else None, precision=nm / nd if nd else None,
        start_mae_s=start_mae, end_mae_s=end_mae, distance_rel_error=dist_err,
        pairs=tuple(pairs),
    )


# --- files ---------------------------------------------------------------------------------

TRUTH_HEADER = ("respondent_id", "kind", "start", "end", "label", "address", "lat", "lon", "mode", "length_m")


def write_truth(path, episodes: Sequence[TruthEpisode]) -> None:
    from .trajectory import format_timestamp

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for ep in episodes:
            items = sorted([*ep.stays, *ep.trips], key=lambda x: x.start)
            for it in items:
                if isinstance(it, TruthStay):
                    w.writerow([ep.respondent_id, "STAY", format_timestamp(it.start), format_timestamp(it.end),
                                it.label or "", it.address or "", f"{it.location[0]:.8f}",
                                f"{it.location[1]:.8f}", "", ""])
                else:
                    w.writerow([ep.respondent_id, "TRIP", format_timestamp(it.start), format_timestamp(it.end),
                                "", "", "", "", it.mode, f"{it.length_m:.3f}"])
