"""Spatial index structure, bbox queries vs linear scan, energy aggregation."""

import random

import pytest

from fleetstream.core import parse_topic_name
from fleetstream.geostore import (
    DuplicateSample,
    GeoStore,
    InvariantViolation,
    RTree,
    StoreParams,
    compute_energy_increments,
)
from fleetstream.join import JoinedSample
from oracles import scan_bbox

T = parse_topic_name


def sample(vid, wid, gps=(35.04, -85.3), fleet="electric", odo=0.0, soc=None,
           fuel=None, route=None, segment=None, charging=None, window_ms=5000):
    return JoinedSample(
        vehicle_id=vid, window_id=wid, ts_ms=(wid + 1) * window_ms, fleet=fleet,
        position=gps, sources={}, flags={}, odometer_m=odo, soc_pct=soc,
        fuel_level_pct=fuel, route_id=route, osm_segment_id=segment,
        charging=charging)


# ---------------------------------------------------------------- r-tree

def test_tree_search_bounds_inclusive():
    t = RTree()
    t.insert(35.0, -85.0, "a")
    assert t.search(35.0, -85.0, 35.0, -85.0) == ["a"]
    assert t.search(34.0, -86.0, 34.9, -85.5) == []
    with pytest.raises(ValueError):
        t.search(2.0, 0.0, 1.0, 0.0)


def test_tree_handles_many_identical_points():
    t = RTree(max_entries=8)
    for i in range(100):
        t.insert(35.0, -85.0, i)
    t.audit()
    assert sorted(t.search(35.0, -85.0, 35.0, -85.0)) == list(range(100))


def test_tree_structure_survives_random_inserts():
    rng = random.Random(5)
    t = RTree()
    pts = []
    for i in range(5000):
        x, y = rng.uniform(-90, 90), rng.uniform(-180, 180)
        t.insert(x, y, i)
        pts.append((i, x, y, 0))
        if (i + 1) % 500 == 0:
            assert t.audit() == i + 1
    for _ in range(100):
        x0, x1 = sorted((rng.uniform(-90, 90), rng.uniform(-90, 90)))
        y0, y1 = sorted((rng.uniform(-180, 180), rng.uniform(-180, 180)))
        want = scan_bbox(pts, x0, y0, x1, y1, 0, 1)
        assert set(t.search(x0, y0, x1, y1)) == want


def test_audit_catches_tampering():
    t = RTree()
    for i in range(50):
        t.insert(float(i), float(i), i)
    t.audit()
    t._root.rect = (0.0, 0.0, 1.0, 1.0)
    with pytest.raises(InvariantViolation):
        t.audit()


# ---------------------------------------------------------------- increments

def test_soc_drop_converts_by_pack_size():
    params = StoreParams(pack_kwh=50.0)
    a = sample("bus-1", 0, soc=80.0, odo=0.0)
    b = sample("bus-1", 1, soc=79.0, odo=3218.688)
    (inc,), skipped = compute_energy_increments([a, b], params)
    assert skipped == 0
    assert inc.energy_kwh == pytest.approx(0.5)
    assert inc.distance_mi == pytest.approx(2.0)
    assert inc.charging is False
    assert (inc.t0_ms, inc.t1_ms) == (a.ts_ms, b.ts_ms)


def test_fuel_drop_converts_by_default_constant():
    # 1% of a 100 gal tank is one gallon
    a = sample("bus-2", 0, fleet="diesel", fuel=50.0, odo=0.0)
    b = sample("bus-2", 1, fleet="diesel", fuel=49.0, odo=1609.344)
    (inc,), _ = compute_energy_increments([a, b])
    assert inc.energy_kwh == pytest.approx(40.7)
    assert inc.distance_mi == pytest.approx(1.0)


def test_charging_interval_contributes_zero():
    a = sample("bus-1", 0, soc=60.0, odo=100.0, charging=True)
    b = sample("bus-1", 1, soc=62.0, odo=100.0)
    (inc,), _ = compute_energy_increments([a, b])
    assert inc.energy_kwh == 0.0
    assert inc.charging is True
    refuel = compute_energy_increments([
        sample("bus-2", 0, fleet="hybrid", fuel=20.0),
        sample("bus-2", 1, fleet="hybrid", fuel=90.0),
    ])[0][0]
    assert refuel.energy_kwh == 0.0 and refuel.charging is True


def test_backward_odometer_skipped_and_counted():
    a = sample("bus-1", 0, soc=80.0, odo=500.0)
    b = sample("bus-1", 1, soc=79.0, odo=400.0)   # rolled back
    c = sample("bus-1", 2, soc=78.0, odo=450.0)
    incs, skipped = compute_energy_increments([a, b, c])
    assert skipped == 1
    assert [i.t0_ms for i in incs] == [b.ts_ms]


def test_increment_preconditions():
    with pytest.raises(ValueError):
        compute_energy_increments([sample("a", 0), sample("b", 1)])
    with pytest.raises(ValueError):
        compute_energy_increments([sample("a", 1), sample("a", 0)])


# ---------------------------------------------------------------- store

def test_insert_query_round_trip():
    store = GeoStore()
    s = sample("bus-1", 3, gps=(35.1, -85.2), soc=50.0)
    assert store.insert(s, offset=7) is True
    (hit,) = store.query_bbox(35.0, -85.3, 35.2, -85.1, 0, 10**12)
    assert hit.sample == s and hit.offset == 7
    assert hit.position == (35.1, -85.2)   # attribute passthrough
    assert store.query_bbox(36.0, -85.3, 37.0, -85.1, 0, 10**12) == []


def test_duplicate_insert_is_noop_conflict_raises():
    store = GeoStore()
    s = sample("bus-1", 3, soc=50.0)
    assert store.insert(s) is True
    assert store.insert(s) is False
    assert len(store) == 1
    with pytest.raises(DuplicateSample):
        store.insert(sample("bus-1", 3, soc=49.0))


def test_query_matches_linear_scan():
    rng = random.Random(77)
    store = GeoStore()
    rows = []
    for i in range(2000):
        vid = f"bus-{i % 23}"
        wid = i // 23
        lat = 35.0 + rng.uniform(0, 0.5)
        lon = -85.5 + rng.uniform(0, 0.5)
        ts = (wid + 1) * 5000
        store.insert(sample(vid, wid, gps=(lat, lon)))
        rows.append(((vid, wid), lat, lon, ts))
    store.tree.audit()
    for _ in range(60):
        la0, la1 = sorted((35.0 + rng.uniform(0, 0.5), 35.0 + rng.uniform(0, 0.5)))
        lo0, lo1 = sorted((-85.5 + rng.uniform(0, 0.5), -85.5 + rng.uniform(0, 0.5)))
        t0 = rng.randrange(0, 400_000)
        t1 = t0 + rng.randrange(0, 400_000)
        got = {(s.vehicle_id, s.window_id)
               for s in store.query_bbox(la0, lo0, la1, lo1, t0, t1)}
        assert got == scan_bbox(rows, la0, lo0, la1, lo1, t0, t1)


def test_results_only_grow():
    store = GeoStore()
    store.insert(sample("bus-1", 0, gps=(35.0, -85.0)))
    before = {(s.vehicle_id, s.window_id)
              for s in store.query_bbox(34.0, -86.0, 36.0, -84.0, 0, 10**12)}
    store.insert(sample("bus-1", 1, gps=(35.01, -85.0)))
    after = {(s.vehicle_id, s.window_id)
             for s in store.query_bbox(34.0, -86.0, 36.0, -84.0, 0, 10**12)}
    assert before < after


def _fixture_store():
    """Two vehicles, hand-set deltas; totals worked out on paper below."""
    store = GeoStore(StoreParams(pack_kwh=100.0))
    # electric on r1: soc 90 -> 89 -> 87, odometer 0 -> 1609.344 -> 4828.032
    store.insert(sample("e-1", 0, soc=90.0, odo=0.0, route="r1", segment="s-1"))
    store.insert(sample("e-1", 1, soc=89.0, odo=1609.344, route="r1", segment="s-1"))
    store.insert(sample("e-1", 2, soc=87.0, odo=4828.032, route="r1", segment="s-2"))
    # diesel on r2: fuel 50 -> 49.5 -> 49.5, odometer 0 -> 3218.688 -> 3218.688
    store.insert(sample("d-1", 0, fleet="diesel", fuel=50.0, odo=0.0, route="r2", segment="s-2"))
    store.insert(sample("d-1", 1, fleet="diesel", fuel=49.5, odo=3218.688, route="r2", segment="s-2"))
    store.insert(sample("d-1", 2, fleet="diesel", fuel=49.5, odo=3218.688, route="r2", segment="s-3"))
    return store
    # e-1: inc0 = 1.0 kWh / 1 mi, inc1 = 2.0 kWh / 2 mi  (pack 100)
    # d-1: inc0 = 0.5% of 100 gal * 40.7 = 20.35 kWh / 2 mi, inc1 = 0 kWh / 0 mi


def test_aggregate_matches_hand_computation():
    store = _fixture_store()
    by_route = {r.key: r for r in store.aggregate_energy("route", 0, 10**12)}
    assert by_route["r1"].energy_kwh == pytest.approx(3.0)
    assert by_route["r1"].distance_mi == pytest.approx(3.0)
    assert by_route["r1"].kwh_per_mile == pytest.approx(1.0)
    assert by_route["r1"].sample_count == 2
    assert by_route["r2"].energy_kwh == pytest.approx(20.35)
    assert by_route["r2"].distance_mi == pytest.approx(2.0)
    assert by_route["r2"].kwh_per_mile == pytest.approx(10.175)
    by_fleet = {r.key: r for r in store.aggregate_energy("fleet", 0, 10**12)}
    assert by_fleet["electric"].energy_kwh == pytest.approx(3.0)
    assert by_fleet["diesel"].energy_kwh == pytest.approx(20.35)
    by_seg = {r.key: r for r in store.aggregate_energy("segment", 0, 10**12)}
    # increments follow the earlier sample's segment, so s-3 never shows up
    assert by_seg["s-1"].energy_kwh == pytest.approx(3.0)
    assert by_seg["s-2"].energy_kwh == pytest.approx(20.35)
    assert "s-3" not in by_seg


def test_zero_distance_group_has_no_rate():
    store = GeoStore()
    store.insert(sample("e-1", 0, soc=90.0, odo=10.0, route="r1"))
    store.insert(sample("e-1", 1, soc=89.0, odo=10.0, route="r1"))
    (row,) = store.aggregate_energy("route", 0, 10**12)
    assert row.distance_mi == 0.0
    assert row.kwh_per_mile is None


def test_totals_add_up_across_partitions():
    store = _fixture_store()
    whole = store.aggregate_energy("fleet", 0, 10**12)
    total = sum(r.energy_kwh for r in whole)
    route_total = sum(r.energy_kwh for r in store.aggregate_energy("route", 0, 10**12))
    assert route_total == pytest.approx(total, rel=1e-9)
    cut = 7000   # splits e-1/d-1 increments between halves
    first = store.aggregate_energy("fleet", 0, cut)
    second = store.aggregate_energy("fleet", cut, 10**12)
    split_total = sum(r.energy_kwh for r in first + second)
    assert split_total == pytest.approx(total, rel=1e-9)
    split_miles = sum(r.distance_mi for r in first + second)
    assert split_miles == pytest.approx(sum(r.distance_mi for r in whole), rel=1e-9)


def test_aggregate_filters_and_validation():
    store = _fixture_store()
    only_diesel = store.aggregate_energy("route", 0, 10**12, fleet="diesel")
    assert [r.key for r in only_diesel] == ["r2"]
    only_r1 = store.aggregate_energy("fleet", 0, 10**12, route="r1")
    assert [r.key for r in only_r1] == ["electric"]
    with pytest.raises(ValueError):
        store.aggregate_energy("driver", 0, 10)
    with pytest.raises(ValueError):
        store.aggregate_energy("route", 10, 0)


def test_rebuild_from_topic_replay(broker, carta):
    out = T("carta/merged/out")
    broker.create_topic(out, carta)
    fixture = _fixture_store()
    for key in sorted(fixture._samples):
        s = fixture._samples[key]
        broker.publish(out, s.ts_ms, s.sample.to_payload(), carta)

    store = GeoStore(StoreParams(pack_kwh=100.0))
    report = store.ingest_topic(broker, out, carta)
    assert report.inserted == 6 and report.duplicates == 0
    again = store.ingest_topic(broker, out, carta)
    assert again.inserted == 0 and again.duplicates == 6
    assert len(store) == 6

    fresh = GeoStore(StoreParams(pack_kwh=100.0))
    fresh.ingest_topic(broker, out, carta)
    assert fresh.aggregate_energy("route", 0, 10**12) == \
        store.aggregate_energy("route", 0, 10**12) == \
        fixture.aggregate_energy("route", 0, 10**12)
