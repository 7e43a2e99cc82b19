import datetime as dt
import json
import random

import numpy as np
import pytest

from fleetstream.core import GeoPoint
from fleetstream.staticdata import (
    DanglingReference,
    ElevationGrid,
    MalformedCsv,
    MissingFile,
    OutOfGridBounds,
    attach_elevation,
    load_elevation_grid,
    load_gtfs,
    load_road_network,
    trips_active_at,
)
from fleetstream.staticdata.roadnet import polyline_length_m

from oracles import ref_haversine_m

MINIMAL = {
    "routes.txt": "route_id,name\nr1,Downtown Loop\n",
    "trips.txt": "trip_id,route_id,service_id,vehicle_id\nt1,r1,weekday,bus-1\n",
    "stops.txt": "stop_id,stop_lat,stop_lon\ns1,35.04,-85.31\ns2,35.05,-85.30\n",
    "stop_times.txt": (
        "trip_id,stop_id,arrival_time,departure_time,stop_sequence\n"
        "t1,s1,08:00:00,08:00:30,1\n"
        "t1,s2,08:55:00,09:00:00,2\n"
    ),
    "calendar.txt": (
        "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
        "weekday,1,1,1,1,1,0,0,20250101,20261231\n"
    ),
}


def write_gtfs(tmp_path, overrides=None):
    files = dict(MINIMAL)
    files.update(overrides or {})
    d = tmp_path / "gtfs"
    d.mkdir(exist_ok=True)
    for name, body in files.items():
        if body is None:
            continue
        (d / name).write_text(body)
    return d


def test_load_minimal_gtfs(tmp_path):
    sched = load_gtfs(write_gtfs(tmp_path))
    assert len(sched.routes) == 1
    assert len(sched.trips) == 1
    assert len(sched.stops) == 2
    assert len(sched.stop_times["t1"]) == 2
    assert sched.trips["t1"].vehicle_id == "bus-1"


def test_missing_file(tmp_path):
    d = write_gtfs(tmp_path)
    (d / "stops.txt").unlink()
    with pytest.raises(MissingFile):
        load_gtfs(d)


def test_dangling_trip_reference(tmp_path):
    d = write_gtfs(tmp_path, {
        "stop_times.txt": MINIMAL["stop_times.txt"] + "ghost,s1,10:00:00,10:00:00,1\n"
    })
    with pytest.raises(DanglingReference, match="ghost"):
        load_gtfs(d)


def test_non_monotone_trip_rejected(tmp_path):
    d = write_gtfs(tmp_path, {
        "stop_times.txt": (
            "trip_id,stop_id,arrival_time,departure_time,stop_sequence\n"
            "t1,s1,08:00:00,08:00:00,1\n"
            "t1,s2,07:59:00,07:59:00,2\n"
        )
    })
    with pytest.raises(MalformedCsv, match="back in time"):
        load_gtfs(d)


def test_trips_active_at_weekday_pattern(tmp_path):
    sched = load_gtfs(write_gtfs(tmp_path))
    monday = dt.date(2026, 3, 2)
    saturday = dt.date(2026, 3, 7)
    active = trips_active_at(sched, monday)
    assert [t.trip_id for t in active] == ["t1"]
    assert (active[0].start_s, active[0].end_s) == (8 * 3600, 9 * 3600)
    assert active[0].vehicle_id == "bus-1"
    assert trips_active_at(sched, saturday) == []


def test_trips_active_empty_schedule(tmp_path):
    d = write_gtfs(tmp_path, {
        "trips.txt": "trip_id,route_id,service_id\n",
        "stop_times.txt": "trip_id,stop_id,arrival_time,departure_time,stop_sequence\n",
    })
    sched = load_gtfs(d)
    assert trips_active_at(sched, dt.date(2026, 3, 2)) == []


def write_network(path, nodes, segments):
    with open(path, "w") as f:
        for nid, lat, lon in nodes:
            f.write(json.dumps({"node": {"id": nid, "lat": lat, "lon": lon}}) + "\n")
        for sid, nids, poly in segments:
            f.write(json.dumps({"segment": {"id": sid, "nodes": nids, "polyline": poly}}) + "\n")


def test_load_road_network_lengths(tmp_path):
    p = tmp_path / "net.jsonl"
    write_network(
        p,
        [("a", 35.0456, -85.3097), ("b", 35.0556, -85.3097)],
        [("s1", ["a", "b"], [[35.0456, -85.3097], [35.0556, -85.3097]])],
    )
    net = load_road_network(p)
    expected = ref_haversine_m(35.0456, -85.3097, 35.0556, -85.3097)
    assert net.segments[0].length_m == pytest.approx(expected, rel=1e-3)


def test_dangling_segment_node(tmp_path):
    p = tmp_path / "net.jsonl"
    write_network(p, [("a", 35.0, -85.0)], [("s1", ["a", "zz"], [[35.0, -85.0], [35.1, -85.0]])])
    with pytest.raises(DanglingReference, match="zz"):
        load_road_network(p)


def test_empty_network_valid(tmp_path):
    p = tmp_path / "net.jsonl"
    p.write_text("")
    net = load_road_network(p)
    assert net.nodes == {} and net.segments == []


def grid(origin_lat, origin_lon, cell, values):
    return ElevationGrid(GeoPoint(origin_lat, origin_lon), cell, np.asarray(values, float))


def test_elevation_uniform_grid(tmp_path):
    p = tmp_path / "net.jsonl"
    write_network(
        p,
        [("a", 35.01, -85.01), ("b", 35.02, -85.02)],
        [("s1", ["a", "b"], [[35.01, -85.01], [35.02, -85.02]])],
    )
    net = load_road_network(p)
    g = grid(35.0, -85.1, 0.05, [[200.0] * 4] * 4)
    out = attach_elevation(net, g)
    assert all(n.elevation_m == 200.0 for n in out.nodes.values())
    assert out.segments[0].grade_pct == 0.0
    # input untouched, repeat application identical
    assert net.nodes["a"].elevation_m is None
    again = attach_elevation(out, g)
    assert again.nodes == out.nodes


def test_elevation_exact_cell_and_midpoint():
    g = grid(35.0, -85.0, 0.01, [[100.0, 110.0], [100.0, 110.0]])
    assert g.sample(GeoPoint(35.0, -85.0)) == 100.0  # lattice point
    assert g.sample(GeoPoint(35.0, -84.99)) == 110.0
    assert g.sample(GeoPoint(35.005, -84.995)) == pytest.approx(105.0)


def test_elevation_out_of_bounds(tmp_path):
    p = tmp_path / "net.jsonl"
    write_network(p, [("far", 36.0, -85.0)], [])
    net = load_road_network(p)
    g = grid(35.0, -85.1, 0.01, [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(OutOfGridBounds, match="far"):
        attach_elevation(net, g)


def test_elevation_grid_file_round_trip(tmp_path):
    path = tmp_path / "dem.json"
    path.write_text(json.dumps({
        "origin": [35.0, -85.0], "cell_deg": 0.01, "rows": 2, "cols": 3,
        "values": [1, 2, 3, 4, 5, 6],
    }))
    g = load_elevation_grid(path)
    assert g.rows == 2 and g.cols == 3
    assert g.sample(GeoPoint(35.0, -84.98)) == pytest.approx(3.0)


def test_grade_sign(tmp_path):
    p = tmp_path / "net.jsonl"
    write_network(
        p,
        [("lo", 35.0, -85.0), ("hi", 35.01, -85.0)],
        [("up", ["lo", "hi"], [[35.0, -85.0], [35.01, -85.0]]),
         ("down", ["hi", "lo"], [[35.01, -85.0], [35.0, -85.0]])],
    )
    net = load_road_network(p)
    g = grid(34.99, -85.01, 0.01, [[100.0] * 3, [100.0] * 3, [150.0] * 3, [150.0] * 3])
    out = attach_elevation(net, g)
    up = out.segment_by_id("up")
    down = out.segment_by_id("down")
    assert up.grade_pct > 0 and down.grade_pct < 0
    assert up.grade_pct == pytest.approx(-down.grade_pct)


def test_segment_length_additivity(tmp_path):
    """Chained segment lengths match the concatenated polyline length."""
    rng = random.Random(5)
    pts = [(35.0, -85.0)]
    for _ in range(10):
        lat, lon = pts[-1]
        pts.append((lat + rng.uniform(0.001, 0.01), lon + rng.uniform(-0.005, 0.005)))
    nodes = [(f"n{i}", lat, lon) for i, (lat, lon) in enumerate(pts)]
    segments = [
        (f"s{i}", [f"n{i}", f"n{i+1}"], [list(pts[i]), list(pts[i + 1])])
        for i in range(len(pts) - 1)
    ]
    p = tmp_path / "net.jsonl"
    write_network(p, nodes, segments)
    net = load_road_network(p)
    total = sum(s.length_m for s in net.segments)
    whole = polyline_length_m([GeoPoint(lat, lon) for lat, lon in pts])
    assert total == pytest.approx(whole, rel=1e-3)
