import threading
from datetime import time, timedelta
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest

from smartdiary.episodes import (
    DiaryEntry,
    DistanceKind,
    Gazetteer,
    GazetteerEntry,
    GreatCircleRouter,
    HttpRouter,
    ModeThresholds,
    RouterUnavailable,
    SchemaViolation,
    build_diary,
    diary_record,
    infer_mode,
    inferred_distance_m,
    read_diary,
    reverse_geocode,
    with_distance,
    write_diary,
)
from smartdiary.simulation import SensorModel, generate_truth, load_scenario, sensor_observe
from smartdiary.stops import StopParams, segment_trace
from smartdiary.trajectory import GeoPoint, read_traces
from conftest import T0, make_trace, offset
from oracles import great_circle_oracle


@pytest.fixture
def gazetteer(worked_paths):
    return Gazetteer.from_csv(worked_paths["gazetteer"])


@pytest.fixture
def worked_segs(worked_paths):
    (trace,) = read_traces(worked_paths["sensor"])
    return segment_trace(trace, StopParams(50, 300))


# --- reverse geocoding -------------------------------------------------------------------

def test_gazetteer_file(gazetteer):
    assert [e.address for e in gazetteer.entries] == ["4 Church Ln.", "203 Main St.", "12 Station Sq."]
    assert gazetteer.entries[1].label == "Son's school"


def test_reverse_geocode_exact_hit(gazetteer):
    school = gazetteer.entries[1]
    assert reverse_geocode(school.lat, school.lon, gazetteer).address == "203 Main St."


def test_reverse_geocode_empty_and_out_of_range():
    assert reverse_geocode(52.0, 5.0, Gazetteer()) is None
    far = Gazetteer((GazetteerEntry(52.0, 5.0, "X"),), match_radius_m=100)
    assert reverse_geocode(*offset(52.0, 5.0, 150, 0), far) is None


def test_reverse_geocode_prefers_nearer():
    a = GazetteerEntry(*offset(52.0, 5.0, 40, 0), "A")
    b = GazetteerEntry(*offset(52.0, 5.0, -80, 0), "B")
    assert reverse_geocode(52.0, 5.0, Gazetteer((b, a))).address == "A"


def test_reverse_geocode_tie_goes_to_first_entry():
    a = GazetteerEntry(*offset(52.0, 5.0, 0, 30), "A")
    b = GazetteerEntry(*offset(52.0, 5.0, 0, -30), "B")
    assert reverse_geocode(52.0, 5.0, Gazetteer((a, b))).address == "A"
    assert reverse_geocode(52.0, 5.0, Gazetteer((b, a))).address == "B"


def test_gazetteer_rejects_bad_entries():
    with pytest.raises(ValueError):
        Gazetteer((GazetteerEntry(95.0, 5.0, "X"),))
    with pytest.raises(ValueError):
        Gazetteer((GazetteerEntry(50.0, 5.0, ""),))


# --- modes -------------------------------------------------------------------------------

def moving(speed, n=60, dt=1.0):
    return [GeoPoint(*offset(52.0, 5.0, speed * dt * k, 0), T0 + timedelta(seconds=dt * k)) for k in range(n)]


@pytest.mark.parametrize("speed,label", [(1.4, "Walk"), (4.5, "Bike"), (15.0, "Car"), (40.0, "Train")])
def test_infer_mode_from_speed(speed, label):
    assert infer_mode(moving(speed)) == label


def test_infer_mode_single_point_is_unknown():
    assert infer_mode(moving(1.4, n=1)) == "Unknown"


def test_infer_mode_accepts_custom_classifier():
    assert infer_mode(moving(1.4), lambda pts: "Train") == "Train"


def test_mode_thresholds_validation():
    assert ModeThresholds().classify(2.0) == "Bike"
    with pytest.raises(ValueError):
        ModeThresholds((2.0, 1.0, 3.0))
    with pytest.raises(ValueError):
        ModeThresholds((2.0,), ("Walk", "Hovercraft"))
    with pytest.raises(ValueError):
        ModeThresholds((2.0,), ("Walk",))


# --- routing ---------------------------------------------------------------------------------

def test_default_router_is_great_circle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = (rng.uniform(-80, 80), rng.uniform(-180, 180))
        b = (rng.uniform(-80, 80), rng.uniform(-180, 180))
        assert inferred_distance_m(a, b) == pytest.approx(great_circle_oracle(*a, *b), rel=1e-9)
    assert inferred_distance_m((52.0, 5.0), (52.0, 5.0)) == 0.0


def test_worked_example_endpoints_are_210_m_apart(gazetteer):
    home, school = gazetteer.entries[:2]
    assert inferred_distance_m((home.lat, home.lon), (school.lat, school.lon)) == pytest.approx(210, abs=1)


class _RouterHandler(BaseHTTPRequestHandler):
    calls = []

    def do_GET(self):
        q = parse_qs(urlparse(self.path).query)
        type(self).calls.append(q)
        body = b"1234.5" if q["mode"] == ["Walk"] else b"oops"
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def router_url():
    _RouterHandler.calls = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _RouterHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/route"
    server.shutdown()
    server.server_close()


def test_http_router_and_cache(router_url):
    r = HttpRouter(router_url, timeout_s=2)
    assert r.distance_m((52.0, 5.0), (52.1, 5.1), "Walk") == 1234.5
    assert r.distance_m((52.0000001, 5.0), (52.1, 5.1), "Walk") == 1234.5
    assert len(_RouterHandler.calls) == 1
    q = _RouterHandler.calls[0]
    assert q["origin"] == ["52.00000,5.00000"] and q["dest"] == ["52.10000,5.10000"]


def test_http_router_concurrent_use(router_url):
    r = HttpRouter(router_url, timeout_s=2)
    out = []
    threads = [threading.Thread(target=lambda k=k: out.append(r.distance_m((52.0, 5.0 + k * 0.01), (52.1, 5.1))))
               for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == [1234.5] * 8


def test_http_router_bad_body_and_unreachable(router_url):
    with pytest.raises(RouterUnavailable):
        HttpRouter(router_url).distance_m((52.0, 5.0), (52.1, 5.1), "Car")
    dead = HttpRouter("http://127.0.0.1:9/route", timeout_s=0.5)
    with pytest.raises(RouterUnavailable):
        inferred_distance_m((52.0, 5.0), (52.1, 5.1), dead)
    fallback = inferred_distance_m((52.0, 5.0), (52.1, 5.1), dead, fallback=True)
    assert fallback == pytest.approx(GreatCircleRouter().distance_m((52.0, 5.0), (52.1, 5.1)))


# --- diary construction --------------------------------------------------------------------------

def test_worked_example_diary(worked_segs, gazetteer):
    rows = build_diary(worked_segs, gazetteer, ModeThresholds(), None, "+02:00")
    assert [(r.address, r.trip_start.strftime("%H:%M"), r.trip_end.strftime("%H:%M"), r.transport_method)
            for r in rows] == [("203 Main St.", "08:35", "08:43", "Walk"), ("4 Church Ln.", "08:51", "08:53", "Walk")]
    assert [r.label for r in rows] == ["Son's school", "Home"]
    assert rows[0].day == "2024-05-14"
    assert rows[0].origin_address is None and rows[1].origin_address == "203 Main St."
    trip1 = rows[0]
    assert trip1.distance_kind is DistanceKind.TrackMeasured
    assert trip1.distance_m == pytest.approx(430, abs=2)
    assert trip1.inferred_distance_m == pytest.approx(210, abs=1)
    assert trip1.distance_m - trip1.inferred_distance_m == pytest.approx(220, abs=2)


def test_route_kind_and_centroid_routing(worked_segs, gazetteer):
    routed = build_diary(worked_segs, gazetteer, tz_offset="+02:00", emit_kind=DistanceKind.RouteInferred)
    assert [round(r.distance_m) for r in routed] == [210, 210]
    centroids = build_diary(worked_segs, gazetteer, tz_offset="+02:00", route_via_addresses=False)
    assert centroids[1].inferred_distance_m == pytest.approx(210, abs=2)
    assert centroids[1].inferred_distance_m != routed[1].distance_m


def test_no_trips_no_rows():
    segs = segment_trace(make_trace([52.0] * 50, [5.0] * 50, np.arange(50) * 10.0))
    assert build_diary(segs) == []


def test_row_count_and_order_on_simulated_day():
    (ep,) = generate_truth(load_scenario("twenty_trips"), seed=3)
    segs = segment_trace(sensor_observe(ep, SensorModel(5, 3, 0), seed=3))
    rows = build_diary(segs, tz_offset="+02:00")
    assert len(rows) == sum(len(s.trips) for s in segs)
    for a, b in zip(rows, rows[1:]):
        assert (a.day, a.trip_end) <= (b.day, b.trip_start)


def test_track_at_least_route_between_centroids():
    (ep,) = generate_truth(load_scenario("twenty_trips"), seed=1)
    segs = segment_trace(sensor_observe(ep, SensorModel(2, 0, 0), seed=1))
    for r in build_diary(segs):
        assert r.track_distance_m >= r.inferred_distance_m - 1e-6


def test_trip_crossing_midnight_is_clamped():
    t0 = T0.replace(hour=21, minute=55)
    lat = [offset(52.0, 5.0, 20 * k, 0)[0] for k in range(40)]
    tr = make_trace(lat, [5.0] * 40, np.arange(40) * 30.0, t0=t0)
    (row,) = build_diary(segment_trace(tr), tz_offset="+02:00")
    assert row.trip_start == time(23, 55) and row.trip_end == time.max


def test_diary_entry_invariants():
    with pytest.raises(ValueError):
        DiaryEntry("1", "1", time(9), time(8), "Walk", 10.0)
    with pytest.raises(ValueError):
        DiaryEntry("1", "1", time(8), time(9), "Walk", -1.0)


# --- files --------------------------------------------------------------------------------------

def test_diary_emission_rounding():
    e = DiaryEntry("1", "2024-05-14", time(8, 35, 59), time(8, 43, 1), "Walk", 429.5)
    assert diary_record(e) == ["1", "2024-05-14", "", "", "08:35", "08:43", "Walk", "430", "TrackMeasured"]


def test_diary_round_trip(worked_segs, gazetteer, tmp_path):
    rows = build_diary(worked_segs, gazetteer, tz_offset="+02:00")
    path = tmp_path / "diary.csv"
    write_diary(path, rows)
    assert path.read_text().splitlines()[0] == (
        "respondent_id,day,label,address,trip_start,trip_end,transport_method,distance_m,distance_kind")
    back = read_diary(path)
    assert [(b.address, b.trip_start, b.distance_kind) for b in back] == [
        ("203 Main St.", time(8, 35), DistanceKind.TrackMeasured),
        ("4 Church Ln.", time(8, 51), DistanceKind.TrackMeasured),
    ]


def test_traditional_diary_layout(tmp_path):
    path = tmp_path / "trad.csv"
    path.write_text(
        "respondent_id,day,label,address,trip_start,trip_end,transport_method,distance_m\n"
        "1,1,Son's school,,08:35,08:50,Walk,210m\n"
    )
    (e,) = read_diary(path)
    assert e.address is None and e.distance_m == 210.0
    assert e.distance_kind is DistanceKind.RespondentReported


@pytest.mark.parametrize("line,field", [
    ("1,1,x,y,08:35,08:30,Walk,210", "trip_end"),
    ("1,1,x,y,8h35,08:50,Walk,210", "trip_start"),
    ("1,1,x,y,08:35,08:50,Walk,far", "distance_m"),
    ("1,,x,y,08:35,08:50,Walk,210", "day"),
])
def test_schema_violations(tmp_path, line, field):
    path = tmp_path / "bad.csv"
    path.write_text("respondent_id,day,label,address,trip_start,trip_end,transport_method,distance_m\n"
                    "1,1,a,b,08:00,08:10,Walk,1\n" + line + "\n")
    with pytest.raises(SchemaViolation) as exc:
        read_diary(path)
    assert (exc.value.row, exc.value.field) == (2, field)


def test_with_distance_swaps_kind(worked_segs, gazetteer):
    row = build_diary(worked_segs, gazetteer, tz_offset="+02:00")[0]
    routed = with_distance(row, DistanceKind.RouteInferred)
    assert routed.distance_m == row.inferred_distance_m and routed.distance_kind is DistanceKind.RouteInferred
