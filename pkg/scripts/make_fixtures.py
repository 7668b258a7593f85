"""Regenerate the bundled worked-example fixtures under src/smartdiary/data.

worked_example_sensor.csv  noiseless 1 s fixes over the observed window
worked_example_app.csv     process output with route distances, day "2"
worked_example_diary.csv   the respondent's own diary for the same morning, day "1"
"""
from __future__ import annotations

import dataclasses
import tempfile
from datetime import time
from pathlib import Path

from smartdiary.cli import run_process
from smartdiary.config import load_config
from smartdiary.episodes import DiaryEntry, DistanceKind, write_diary
from smartdiary.simulation import generate_truth, load_scenario, sensor_observe
from smartdiary.trajectory import write_traces

DATA = Path(__file__).resolve().parent.parent / "src" / "smartdiary" / "data"


def main() -> None:
    cfg = load_config(DATA / "worked_example.conf")
    (ep,) = generate_truth(load_scenario(DATA / "worked_example.toml"), cfg.seed)
    write_traces(DATA / "worked_example_sensor.csv", [sensor_observe(ep, cfg.sensor_model, cfg.seed)])

    route_cfg = load_config(DATA / "worked_example.conf", ["process.distance_kind=RouteInferred"])
    app, _ = run_process(DATA / "worked_example_sensor.csv", route_cfg)
    write_diary(DATA / "worked_example_app.csv", [dataclasses.replace(e, day="2") for e in app])

    # self-reported times are coarser than any rounding rule applied to the truth
    reported = [
        ("Son's school", "203 Main St.", time(8, 35), time(8, 50)),
        ("Home", "4 Church Ln.", time(8, 50), time(9, 0)),
    ]
    write_diary(DATA / "worked_example_diary.csv", [
        DiaryEntry("1", "1", a, b, "Walk", 210.0, DistanceKind.RespondentReported, label, addr)
        for label, addr, a, b in reported
    ])


if __name__ == "__main__":
    main()
