"""Record dashboard test fixtures from a live gateway.

Runs the full pipeline on a small scenario, injects one count anomaly and
one coverage gap through the nightly monitor, then captures the exact JSON
bodies the HTTP API returns.  Rerun from the repository root whenever the
API shape changes:

    python3 frontend/fixtures/record.py
"""

import datetime as dt
import json
import random
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from fleetstream.broker import Broker
from fleetstream.core import parse_topic_name
from fleetstream.gateway.api import GatewayState, create_app
from fleetstream.geostore import GeoStore
from fleetstream.join.config import preset_config
from fleetstream.join.runner import run_join
from fleetstream.monitor import MonitorConfig, date_of_ms, run_nightly
from fleetstream.simulate.scenario import ScenarioConfig, run_simulation
from fleetstream.simulate.worldgen import WorldParams, build_world, write_world
from fleetstream.staticdata.gtfs import GtfsSchedule, Route, StopTime, Trip

OUT = Path(__file__).resolve().parent
root = Path(tempfile.mkdtemp(prefix="fixture-rec-"))

scenario = ScenarioConfig(seed=7, horizon_s=900,
                          fleets={"diesel": 2, "electric": 2, "hybrid": 2},
                          world_dir=str(root / "world"))
world = build_world(WorldParams(seed=7, vehicle_ids=tuple(scenario.vehicle_ids())))
write_world(world, root / "world")

broker = Broker(root / "data", {"carta": "s3cret"}, fsync_each=False)
cap = broker.authenticate("carta", "s3cret")
report = run_simulation(scenario, broker)
run_join(preset_config(), broker, cap, world_dir=root / "world")

store = GeoStore()
store.ingest_topic(broker, parse_topic_name("carta/merged/enriched"), cap)

# one count dropout on the scenario date, one never-reporting vehicle
day = dt.date(2026, 3, 2)
rng = random.Random(3)
base = {d: round(86_400 * (1 + rng.uniform(-0.002, 0.002))) for d in range(-28, 1)}
base[0] = round(base[0] * 0.6)

def counts(topic, t0, t1):
    if str(topic) != "carta/telemetry/viriciti-diesel":
        return 0
    return base.get((date_of_ms(t0) - day).days, 0)

trips = {"t-9": Trip("t-9", "r00", "daily", "diesel-001")}
stop_times = {"t-9": [StopTime("t-9", "s-a", 8 * 3600, 8 * 3600, 1),
                      StopTime("t-9", "s-b", 9 * 3600, 9 * 3600, 2)]}
schedule = GtfsSchedule({"r00": Route("r00", "loop")}, trips, {}, stop_times, {})
run_nightly(day, broker, cap, schedule, config=MonitorConfig(),
            count_provider=counts, telemetry_counter=lambda v, a, b: 0)

client = TestClient(create_app(GatewayState(
    broker, store, cap, network=world.network)))

t0, t1 = report.start_ms, report.end_ms + 10_000
bbox = "35.00,-85.36,35.10,-85.25"

def grab(name, path, **params):
    r = client.get(path, params={k: str(v) for k, v in params.items()})
    assert r.status_code == 200, (name, r.status_code, r.text)
    (OUT / name).write_text(json.dumps(r.json(), indent=2, sort_keys=True) + "\n")
    print(f"{name:<28} {len(r.content):>6} bytes")

grab("aggregate_fleet.json", "/api/v1/aggregate",
     group_by="fleet", from_ms=t0, to_ms=t1)
grab("aggregate_route.json", "/api/v1/aggregate",
     group_by="route", from_ms=t0, to_ms=t1)
grab("aggregate_empty.json", "/api/v1/aggregate",
     group_by="fleet", from_ms=0, to_ms=1)
grab("segments.json", "/api/v1/segments", bbox=bbox, from_ms=t0, to_ms=t1)
grab("segments_empty.json", "/api/v1/segments",
     bbox="0,0,0.1,0.1", from_ms=t0, to_ms=t1)
grab("alerts.json", "/api/v1/alerts", from_ms=0, to_ms=4_000_000_000_000, limit=50)
grab("alerts_empty.json", "/api/v1/alerts", from_ms=0, to_ms=1)
grab("stats.json", "/api/v1/topics/stats")

broker.close()
print("fixtures written to", OUT)
