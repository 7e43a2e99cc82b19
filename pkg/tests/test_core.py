import math
import random

import pytest
from hypothesis import given, strategies as st

from fleetstream.core import (
    GeoPoint,
    MalformedTopic,
    TimestampBeforeOrigin,
    TimeWindowSpec,
    TopicName,
    format_topic_name,
    haversine_m,
    parse_topic_name,
    window_ids_for,
)

from oracles import enumerate_window_ids, ref_haversine_m

token = st.from_regex(r"[a-z0-9][a-z0-9-]{0,8}", fullmatch=True)


def test_parse_topic_name_examples():
    t = parse_topic_name("carta/telemetry/viriciti-electric")
    assert (t.tenant, t.category, t.topic) == ("carta", "telemetry", "viriciti-electric")
    t = parse_topic_name("carta/weather/darksky")
    assert (t.tenant, t.category, t.topic) == ("carta", "weather", "darksky")


@pytest.mark.parametrize("bad", [
    "carta/telemetry",  # wrong arity
    "carta/telemetry/a/b",
    "carta//x",
    "Carta/telemetry/x",  # uppercase
    "carta/telemetry/-x",  # leading dash
    "carta/tele metry/x",
    "",
])
def test_parse_topic_name_rejects(bad):
    with pytest.raises(MalformedTopic):
        parse_topic_name(bad)


def test_format_topic_name():
    assert format_topic_name(TopicName("carta", "traffic", "here")) == "carta/traffic/here"
    assert format_topic_name(TopicName("carta", "telemetry", "viriciti-diesel")) == \
        "carta/telemetry/viriciti-diesel"


@given(token, token, token)
def test_topic_round_trip(a, b, c):
    t = TopicName(a, b, c)
    assert parse_topic_name(format_topic_name(t)) == t


def test_haversine_identity_and_reference():
    p = GeoPoint(35.0456, -85.3097)
    assert haversine_m(p, p) == 0.0
    q = GeoPoint(35.0556, -85.3097)
    d = haversine_m(p, q)
    assert d == pytest.approx(1111.95, abs=0.05)
    assert d == pytest.approx(ref_haversine_m(p.lat, p.lon, q.lat, q.lon), rel=1e-12)


def test_haversine_symmetry_and_nonnegative():
    rng = random.Random(7)
    for _ in range(200):
        a = GeoPoint(rng.uniform(-89, 89), rng.uniform(-179, 179))
        b = GeoPoint(rng.uniform(-89, 89), rng.uniform(-179, 179))
        d_ab, d_ba = haversine_m(a, b), haversine_m(b, a)
        assert d_ab >= 0.0
        assert math.isclose(d_ab, d_ba, rel_tol=1e-12)
        assert d_ab == pytest.approx(ref_haversine_m(a.lat, a.lon, b.lat, b.lon), rel=1e-9)


def test_geopoint_range_enforced():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, -180.5)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        TimeWindowSpec(5000, 0)
    with pytest.raises(ValueError):
        TimeWindowSpec(5000, 6000)
    with pytest.raises(ValueError):
        TimeWindowSpec(5000, 1500)  # does not tile


def test_window_ids_examples():
    assert window_ids_for(7350, TimeWindowSpec(5000, 5000)) == [1]
    assert window_ids_for(7350, TimeWindowSpec(5000, 1000)) == [3, 4, 5, 6, 7]
    assert window_ids_for(0, TimeWindowSpec(5000, 1000)) == [0]


def test_window_ids_before_origin():
    with pytest.raises(TimestampBeforeOrigin):
        window_ids_for(99, TimeWindowSpec(1000, 1000, origin_ms=100))


@given(
    st.integers(min_value=0, max_value=10**7),
    st.integers(min_value=1, max_value=20),
    st.integers(min_value=1, max_value=20),
    st.integers(min_value=0, max_value=5000),
)
def test_window_ids_match_enumeration(ts, hop_units, multiple, origin):
    hop = hop_units * 250
    window = hop * multiple
    spec = TimeWindowSpec(window, hop, origin)
    ts = ts + origin
    got = window_ids_for(ts, spec)
    assert got == enumerate_window_ids(ts, window, hop, origin)
    # containment holds for every returned id
    for w in got:
        assert spec.window_start(w) <= ts < spec.window_end(w)
    # interior timestamps hit exactly window/hop windows, consecutive ids
    if ts >= origin + window - hop:
        assert len(got) == window // hop
        assert all(b - a == 1 for a, b in zip(got, got[1:]))
