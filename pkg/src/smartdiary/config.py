"""Run configuration: TOML file plus ``--set key=value`` overrides.

Keys are addressed by dotted path (``stop.radius_m``). Every run is fully
described by its config file, its overrides and its input files, so runs can
be archived and replayed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Any, Sequence

from .episodes import DistanceKind, Gazetteer, GreatCircleRouter, HttpRouter, ModeThresholds, parse_offset
from .multisource import ALL_MODES, Weighting
from .simulation import DiaryModel, SensorModel
from .stops import StopParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "stop.radius_m": 50.0,
    "stop.min_duration_s": 300.0,
    "gaps.max_gap_s": 300.0,
    "mode.breakpoints": [2.0, 6.0, 35.0],
    "mode.labels": ["Walk", "Bike", "Car", "Train"],
    "gazetteer.path": "",
    "gazetteer.match_radius_m": 100.0,
    "router.url": "",
    "router.timeout_s": 5.0,
    "router.fallback": True,
    "router.via_addresses": True,
    "timezone.offset": "+00:00",
    "process.distance_kind": "TrackMeasured",
    "process.workers": 1,
    "harmonize.keep_app_labels": False,
    "estimate.mode": ALL_MODES,
    "estimate.weighting": "auto",
    "sensor.sampling_interval_s": 10.0,
    "sensor.gps_noise_sigma_m": 5.0,
    "sensor.dropout": 0.0,
    "diary.time_rounding_min": 5,
    "diary.p0": 0.5,
    "diary.lambda_m": 500.0,
    "diary.distance_report": "StraightLine",
}
PATH_KEYS = ("gazetteer.path",)


def _flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value`` with the value read as a TOML literal, else as a bare string."""
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value: {item!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return list(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def stop_params(self) -> StopParams:
        return StopParams(self["stop.radius_m"], self["stop.min_duration_s"])

    @property
    def max_gap_s(self) -> float:
        return self["gaps.max_gap_s"]

    @property
    def thresholds(self) -> ModeThresholds:
        return ModeThresholds(tuple(float(x) for x in self["mode.breakpoints"]), tuple(self["mode.labels"]))

    @property
    def tz_offset(self) -> timedelta:
        return parse_offset(self["timezone.offset"])

    @property
    def distance_kind(self) -> DistanceKind:
        return DistanceKind(self["process.distance_kind"])

    @property
    def weighting(self) -> Weighting | None:
        w = self["estimate.weighting"]
        return None if w == "auto" else Weighting(w)

    @property
    def sensor_model(self) -> SensorModel:
        return SensorModel(self["sensor.sampling_interval_s"], self["sensor.gps_noise_sigma_m"], self["sensor.dropout"])

    @property
    def diary_model(self) -> DiaryModel:
        return DiaryModel(self["diary.time_rounding_min"], self["diary.p0"], self["diary.lambda_m"],
                          self["diary.distance_report"])

    def gazetteer(self) -> Gazetteer:
        path = self["gazetteer.path"]
        if not path:
            return Gazetteer(match_radius_m=self["gazetteer.match_radius_m"])
        return Gazetteer.from_csv(path, self["gazetteer.match_radius_m"])

    def router(self):
        url = self["router.url"]
        return HttpRouter(url, self["router.timeout_s"]) if url else GreatCircleRouter()

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig({**self.values, "seed": int(seed)})

    def validate(self) -> "RunConfig":
        try:
            self.stop_params
            self.thresholds
            self.tz_offset
            self.distance_kind
            self.weighting
            self.sensor_model
            self.diary_model
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.distance_kind is DistanceKind.RespondentReported:
            raise ConfigError("process.distance_kind must be TrackMeasured or RouteInferred")
        if self.max_gap_s <= 0:
            raise ConfigError("gaps.max_gap_s must be positive")
        if self["gazetteer.match_radius_m"] < 0:
            raise ConfigError("gazetteer.match_radius_m must be non-negative")
        if self["process.workers"] < 1:
            raise ConfigError("process.workers must be at least 1")
        if self["router.timeout_s"] <= 0:
            raise ConfigError("router.timeout_s must be positive")
        path = self["gazetteer.path"]
        if path and not Path(path).is_file():
            raise ConfigError(f"gazetteer.path: no such file: {path}")
        try:
            self.gazetteer()
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"gazetteer.path: {exc}") from None
        return self


def load_config(path=None, overrides: Sequence[str] = ()) -> RunConfig:
    """Defaults, then the config file, then overrides (last wins).

    Relative paths in the file resolve against the file's directory; paths
    given as overrides resolve against the working directory.
    """
    values = dict(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror or exc}") from None
        try:
            data = _flatten(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for key, v in data.items():
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: unknown key {key!r}")
            v = _coerce(key, v)
            if key in PATH_KEYS and v and not Path(v).is_absolute():
                v = str(path.parent / v)
            values[key] = v
    for item in overrides:
        key, v = parse_override(item)
        if key not in DEFAULTS:
            raise ConfigError(f"--set: unknown key {key!r}")
        values[key] = _coerce(key, v)
    return RunConfig(values).validate()
