"""Command-line entry point: ``smartdiary <subcommand> ...``.

Exit codes: 0 success, 1 input validation failure, 2 I/O failure,
3 configuration or scenario error. Outputs depend only on the inputs, the
config and the seed, so repeated runs write byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .episodes import (
    DistanceKind,
    RouterUnavailable,
    SchemaViolation,
    build_diary,
    read_diary,
    write_diary,
)
from .harmonize import (
    HarmonizedDataset,
    SourceTag,
    format_report,
    format_table,
    harmonize,
    mode_effect_report,
    read_harmonized,
    write_harmonized,
)
from .multisource import (
    EmptyPairs,
    MissingVariance,
    NoMatchingTrips,
    ZeroInferredDistance,
    apply_calibration,
    as_source_estimate,
    calibration_ratio,
    estimate_mean_distance,
    macro_integrate,
    read_pairs,
    write_estimates,
    write_pairs,
)
from .simulation import (
    InvalidScenario,
    diary_observe,
    evaluate_recovery,
    generate_truth,
    load_scenario,
    sensor_observe,
    write_truth,
)
from .stops import point_classes, segment_trace, write_point_classes
from .trajectory import TraceValidationError, read_traces, write_traces

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


class ValidationFailure(Exception):
    """Input data rejected; ``lines`` go to standard error."""

    def __init__(self, lines):
        super().__init__("\n".join(lines))
        self.lines = list(lines)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- process ---------------------------------------------------------------------

def run_process(trace_path, cfg: RunConfig):
    """Trace file -> (derived diary rows, per-fix classes)."""
    try:
        traces = read_traces(trace_path)
    except TraceValidationError as exc:
        raise ValidationFailure(
            [f"row {v.row}: {v.kind}: {v.message}" for v in exc.violations]
        ) from None
    params, gap = cfg.stop_params, cfg.max_gap_s

    def one(trace):
        return segment_trace(trace, params, gap)

    workers = cfg["process.workers"]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_resp = list(pool.map(one, traces))
    else:
        per_resp = [one(t) for t in traces]
    segs = [s for group in per_resp for s in group]
    entries = build_diary(
        segs, cfg.gazetteer(), cfg.thresholds, cfg.router(), cfg.tz_offset,
        emit_kind=cfg.distance_kind, router_fallback=cfg["router.fallback"],
        route_via_addresses=cfg["router.via_addresses"],
    )
    classes = [row for group in per_resp for row in point_classes(group)]
    return entries, classes


def cmd_process(args, cfg: RunConfig) -> int:
    entries, classes = run_process(args.trace, cfg)
    out = _out_dir(args)
    write_diary(out / "diary.csv", entries)
    write_pairs(out / "pairs.csv", entries)
    write_point_classes(out / "points.csv", classes)
    print(f"{len(entries)} trips written to {out / 'diary.csv'}")
    return EXIT_OK


# --- harmonize / report ------------------------------------------------------------

def cmd_harmonize(args, cfg: RunConfig) -> int:
    diary = read_diary(args.diary, default_kind=DistanceKind.RespondentReported)
    app = read_diary(args.app, default_kind=None)
    ds = harmonize(diary, app, keep_app_labels=cfg["harmonize.keep_app_labels"])
    report = format_report(mode_effect_report(ds))
    out = _out_dir(args)
    write_harmonized(out / "harmonized.csv", ds)
    (out / "report.txt").write_text(report + "\n")
    print(format_table(ds))
    print()
    print(report)
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    ds = read_harmonized(args.harmonized)
    report = format_report(mode_effect_report(ds))
    if args.out is not None:
        (_out_dir(args) / "report.txt").write_text(report + "\n")
    print(report)
    return EXIT_OK


# --- estimate -------------------------------------------------------------------------

def _sources(args) -> tuple[list, list]:
    if args.harmonized:
        ds: HarmonizedDataset = read_harmonized(args.harmonized)
        return ds.by_source(SourceTag.Diary), ds.by_source(SourceTag.App)
    diary = read_diary(args.diary) if args.diary else []
    app = read_diary(args.app, default_kind=None) if args.app else []
    return diary, app


def cmd_estimate(args, cfg: RunConfig) -> int:
    if not (args.harmonized or args.diary or args.app):
        raise ConfigError("estimate needs a harmonized file or --diary/--app")
    mode = cfg["estimate.mode"]
    diary, app = _sources(args)
    items, pooled = [], []
    for tag, rows in ((SourceTag.Diary, diary), (SourceTag.App, app)):
        if rows:
            est = estimate_mean_distance(rows, mode, tag)
            items.append(est)
            pooled.append(est)
    if not items:
        raise NoMatchingTrips("no trips in any source")
    if args.pairs:
        factor = calibration_ratio(read_pairs(args.pairs))
        items.append((items[0].statistic, factor))
        diary_est = next((e for e in pooled if e.source is SourceTag.Diary), None)
        if diary_est is not None:
            calibrated = apply_calibration(diary_est, factor)
            items.append(calibrated)
            pooled = [as_source_estimate(calibrated)] + [e for e in pooled if e.source is SourceTag.App]
        weighting = cfg.weighting
        items.append(macro_integrate(pooled, weighting))
    out = _out_dir(args)
    write_estimates(out / "estimates.csv", items)
    print((out / "estimates.csv").read_text(), end="")
    return EXIT_OK


# --- simulate ---------------------------------------------------------------------------

def _write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, "EMPTY" if v is None else (f"{v:.6f}" if isinstance(v, float) else v)])


def cmd_simulate(args, cfg: RunConfig) -> int:
    scenario = load_scenario(args.scenario)
    seed = cfg.seed
    episodes = generate_truth(scenario, seed)
    sensor = [sensor_observe(ep, cfg.sensor_model, [seed, 1, k]) for k, ep in enumerate(episodes)]
    reported = [e for k, ep in enumerate(episodes) for e in diary_observe(ep, cfg.diary_model, [seed, 2, k])]
    out = _out_dir(args)
    write_truth(out / "truth.csv", episodes)
    write_traces(out / "sensor.csv", sensor)
    write_diary(out / "diary.csv", reported)
    tz_cfg = RunConfig({**cfg.values, "timezone.offset": _fmt_offset(scenario.tz_offset)})
    derived, _ = run_process(out / "sensor.csv", tz_cfg)
    write_diary(out / "derived.csv", derived)
    m = evaluate_recovery(episodes, derived)
    rows = list(m.as_dict().items())
    _write_metrics(out / "metrics.csv", rows)
    for k, v in rows:
        print(f"{k:20s} {'EMPTY' if v is None else (f'{v:.4f}' if isinstance(v, float) else v)}")
    return EXIT_OK


def _fmt_offset(td) -> str:
    minutes = int(td.total_seconds() // 60)
    sign = "-" if minutes < 0 else "+"
    return f"{sign}{abs(minutes) // 60:02d}:{abs(minutes) % 60:02d}"


# --- entry point --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="override the config seed")

    parser = argparse.ArgumentParser(prog="smartdiary", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", parents=[common], help="raw locations -> derived diary")
    p.add_argument("trace", help="CSV with respondent_id,timestamp,lat,lon")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("harmonize", parents=[common], help="stack diary and app rows, report mode effects")
    p.add_argument("diary", help="respondent diary CSV")
    p.add_argument("app", help="derived (app) diary CSV")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("estimate", parents=[common], help="per-source, calibrated and pooled estimates")
    p.add_argument("harmonized", nargs="?", help="harmonized CSV (alternative to --diary/--app)")
    p.add_argument("--diary", metavar="PATH")
    p.add_argument("--app", metavar="PATH")
    p.add_argument("--pairs", metavar="PATH", help="CSV with actual_m,inferred_m columns")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", parents=[common], help="synthetic truth, sensor and diary data")
    p.add_argument("scenario", help="scenario TOML file or bundled name (worked_example, twenty_trips)")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="mode-effect report for a harmonized file")
    p.add_argument("harmonized")
    p.add_argument("--out", metavar="DIR", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    err = sys.stderr
    try:
        cfg = load_config(args.config, args.overrides).with_seed(args.seed)
        return args.func(args, cfg)
    except ValidationFailure as exc:
        for line in exc.lines:
            print(line, file=err)
        return EXIT_INVALID
    except SchemaViolation as exc:
        print(f"SchemaViolation: {exc}", file=err)
        return EXIT_INVALID
    except (NoMatchingTrips, EmptyPairs, ZeroInferredDistance, MissingVariance) as exc:
        print(f"{type(exc).__name__}: {exc}", file=err)
        return EXIT_INVALID
    except (ConfigError, InvalidScenario) as exc:
        print(f"{type(exc).__name__}: {exc}", file=err)
        return EXIT_CONFIG
    except RouterUnavailable as exc:
        print(f"RouterUnavailable: {exc}", file=err)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=err)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
