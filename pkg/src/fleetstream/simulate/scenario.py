"""Scenario-driven production of all five live streams onto broker topics.

One event heap drives every producer.  Heap entries are ordered by
(timestamp, source priority, push sequence) and all randomness is
counter-based, so a scenario with a given seed publishes byte-identical
payload sequences per topic no matter how fast the clock runs.

Vehicles follow their scheduled trips exactly: position is interpolated
along the route loop between stop departure and the next arrival, so a
bus's path distance (and therefore odometer) is a monotone piecewise-linear
function of time.  Off-service vehicles sit at their loop start, which acts
as the depot (charging / refuelling happens there).

Fault injection drops records matching a topic or vehicle inside a time
window.  Partial drops are spread evenly: with ``drop_fraction`` f, record n
of the matching stream is kept iff floor((n+1)(1-f)) > floor(n(1-f)).
"""

from __future__ import annotations

import datetime as dt
import heapq
import json
import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from ..broker import AuthFailed, Broker, Capability
from ..core import (ConfigError, FleetKind, GeoPoint, MalformedTopic, TopicName,
                    parse_topic_name)
from ..staticdata import trips_active_at
from .records import OccupancyRecord, TripContextRecord
from .rng import int_hash, unit_hash
from .traffic import gen_traffic
from .vehicle import EnergyParams, StepContext, initial_state, step_vehicle
from .weather import gen_weather
from .worldgen import PathGeometry, World, WorldParams, build_world, load_world

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class FaultWindow:
    start_ms: int
    end_ms: int
    topic: str | None = None       # full tenant/category/topic string
    vehicle_id: str | None = None
    drop_fraction: float = 1.0

    def __post_init__(self) -> None:
        if self.end_ms <= self.start_ms:
            raise ConfigError("fault window must have end_ms > start_ms")
        if self.topic is None and self.vehicle_id is None:
            raise ConfigError("fault window needs a topic or a vehicle_id")
        if not 0.0 < self.drop_fraction <= 1.0:
            raise ConfigError(f"drop_fraction {self.drop_fraction} outside (0, 1]")

    def matches(self, ts_ms: int, topic: str, vehicle_id: str | None) -> bool:
        if not self.start_ms <= ts_ms < self.end_ms:
            return False
        if self.topic is not None and self.topic != topic:
            return False
        if self.vehicle_id is not None and self.vehicle_id != vehicle_id:
            return False
        return True


DEFAULT_TOPICS = {
    "telemetry-diesel": "carta/telemetry/viriciti-diesel",
    "telemetry-electric": "carta/telemetry/viriciti-electric",
    "telemetry-hybrid": "carta/telemetry/viriciti-hybrid",
    "trip-context": "carta/telemetry/clever",
    "weather": "carta/weather/darksky",
    "traffic": "carta/traffic/here",
    "occupancy": "carta/occupancy/apc",
}

_FLEET_NAMES = ("diesel", "electric", "hybrid")


@dataclass
class ScenarioConfig:
    seed: int = 7
    start_date: str = "2026-03-02"
    day_start_s: int = 6 * 3600
    horizon_s: int = 3600
    accel: float = 0.0           # 0 = flat out, N = N x real time
    fleets: dict = field(default_factory=lambda: {"diesel": 50, "electric": 3, "hybrid": 7})
    telemetry_period_ms: int = 1_000
    trip_context_period_ms: int = 5_000
    weather_period_ms: int = 300_000
    traffic_period_ms: int = 60_000
    tenant: str = "carta"
    secret: str = "s3cret"
    topics: dict = field(default_factory=lambda: dict(DEFAULT_TOPICS))
    pack_kwh: float = 200.0
    tank_gal: float = 100.0
    driver_pool: int = 40
    faults: list = field(default_factory=list)
    world_dir: str | None = None

    def __post_init__(self) -> None:
        unknown = set(self.fleets) - set(_FLEET_NAMES)
        if unknown:
            raise ConfigError(f"unknown fleet kinds: {sorted(unknown)}")
        for key in ("telemetry_period_ms", "trip_context_period_ms",
                    "weather_period_ms", "traffic_period_ms"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.horizon_s <= 0:
            raise ConfigError("horizon_s must be positive")
        missing = set(DEFAULT_TOPICS) - set(self.topics)
        if missing:
            raise ConfigError(f"topics missing entries: {sorted(missing)}")
        try:
            dt.datetime.strptime(self.start_date, "%Y-%m-%d")
        except ValueError as e:
            raise ConfigError(f"bad start_date: {e}") from e

    @property
    def start_ms(self) -> int:
        day = dt.datetime.strptime(self.start_date, "%Y-%m-%d")
        midnight = int(day.replace(tzinfo=dt.timezone.utc).timestamp() * 1000)
        return midnight + self.day_start_s * 1000

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.horizon_s * 1000

    def vehicle_ids(self) -> dict[str, FleetKind]:
        out: dict[str, FleetKind] = {}
        for name in _FLEET_NAMES:
            for i in range(int(self.fleets.get(name, 0))):
                out[f"{name}-{i:03d}"] = FleetKind(name)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(raw)
        try:
            data["faults"] = [fw if isinstance(fw, FaultWindow) else FaultWindow(**fw)
                              for fw in raw.get("faults", [])]
        except TypeError as e:
            raise ConfigError(f"bad fault window: {e}") from e
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"scenario file not found: {path}") from e
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(raw)


@dataclass
class SimulationReport:
    start_ms: int
    end_ms: int
    published: dict[str, int]
    dropped: dict[str, int]
    wall_seconds: float

    @property
    def total_published(self) -> int:
        return sum(self.published.values())


# --- scheduled motion --------------------------------------------------------

@dataclass
class _PlannedTrip:
    trip_id: str
    route_id: str
    driver_id: str
    start_ms: int
    end_ms: int


class _MotionPlan:
    """Piecewise-linear cumulative path distance plus trip spans for one vehicle."""

    def __init__(self, vehicle_id: str, path: PathGeometry, home: GeoPoint):
        self.vehicle_id = vehicle_id
        self.path = path
        self.home = home
        self.times: list[int] = []
        self.dists: list[float] = []
        self.trips: list[_PlannedTrip] = []
        self._trip_starts: list[int] = []

    def add_trip(self, trip: _PlannedTrip, breakpoints: list[tuple[int, float]]) -> None:
        base = self.dists[-1] if self.dists else 0.0
        for t, d in breakpoints:
            if self.times and t < self.times[-1]:
                raise ConfigError(f"{self.vehicle_id}: trips overlap at {t}")
            if self.times and t == self.times[-1]:
                continue
            self.times.append(t)
            self.dists.append(base + d)
        self.trips.append(trip)
        self._trip_starts.append(trip.start_ms)

    def cum_m(self, ts_ms: int) -> float:
        if not self.times or ts_ms <= self.times[0]:
            return 0.0
        if ts_ms >= self.times[-1]:
            return self.dists[-1]
        i = bisect_right(self.times, ts_ms) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        d0, d1 = self.dists[i], self.dists[i + 1]
        return d0 + (d1 - d0) * (ts_ms - t0) / (t1 - t0)

    def trip_at(self, ts_ms: int) -> _PlannedTrip | None:
        i = bisect_right(self._trip_starts, ts_ms) - 1
        if i >= 0 and self.trips[i].start_ms <= ts_ms < self.trips[i].end_ms:
            return self.trips[i]
        return None

    def locate(self, ts_ms: int) -> tuple[GeoPoint, float, float, _PlannedTrip | None]:
        """Position, grade, cumulative distance, active trip (None off-service)."""
        trip = self.trip_at(ts_ms)
        cum = self.cum_m(ts_ms)
        if trip is None:
            return self.home, 0.0, cum, None
        total = self.path.total_m
        d = cum % total if total > 0 else 0.0
        pos, grade, _seg = self.path.locate(d)
        return pos, grade, cum, trip


def _driver_for(seed: int, pool: int, trip_id: str) -> str:
    return f"drv-{int_hash(pool, seed, 'driver', trip_id):03d}"


def _build_motion_plans(cfg: ScenarioConfig, world: World) -> dict[str, _MotionPlan]:
    """One plan per vehicle covering every calendar day the horizon touches."""
    fleet_of = cfg.vehicle_ids()
    missing = set(fleet_of) - set(world.vehicle_routes)
    if missing:
        raise ConfigError(f"world has no schedule slots for vehicles: {sorted(missing)[:5]}")

    plans = {
        vid: _MotionPlan(vid, world.paths[world.vehicle_routes[vid]], world.depot_of(vid))
        for vid in fleet_of
    }

    first_day = dt.datetime.strptime(cfg.start_date, "%Y-%m-%d").date()
    n_days = (cfg.day_start_s * 1000 + cfg.horizon_s * 1000 + MS_PER_DAY - 1) // MS_PER_DAY
    for day_idx in range(n_days):
        date = first_day + dt.timedelta(days=day_idx)
        midnight_ms = int(dt.datetime.combine(date, dt.time(), dt.timezone.utc)
                          .timestamp() * 1000)
        for active in trips_active_at(world.schedule, date):
            vid = active.vehicle_id
            if vid not in plans:
                continue
            plan = plans[vid]
            rows = world.schedule.stop_times[active.trip_id]
            stop_dist = _stop_distances(plan.path, len(rows))
            breakpoints: list[tuple[int, float]] = []
            for row, d in zip(rows, stop_dist):
                breakpoints.append((midnight_ms + row.arrival_s * 1000, d))
                if row.departure_s != row.arrival_s:
                    breakpoints.append((midnight_ms + row.departure_s * 1000, d))
            trip = _PlannedTrip(active.trip_id, active.route_id,
                                _driver_for(cfg.seed, cfg.driver_pool, active.trip_id),
                                midnight_ms + active.start_s * 1000,
                                midnight_ms + active.end_s * 1000)
            plan.add_trip(trip, breakpoints)
    return plans


def _stop_distances(path: PathGeometry, n_rows: int) -> list[float]:
    """Path distance of each scheduled stop (every 2nd loop node, plus the end)."""
    idx = list(range(0, len(path.node_ids), 2))
    if idx[-1] != len(path.node_ids) - 1:
        idx.append(len(path.node_ids) - 1)
    if len(idx) != n_rows:
        raise ConfigError(f"schedule rows ({n_rows}) do not match loop stops ({len(idx)})")
    return [path.cum_m[i] for i in idx]


# --- the run loop ------------------------------------------------------------

_PRIO = {"weather": 0, "traffic": 1, "trip_context": 2, "telemetry": 3, "occupancy": 4}


def run_simulation(cfg: ScenarioConfig, broker: Broker) -> SimulationReport:
    wall_start = time.monotonic()

    try:
        topics = {key: parse_topic_name(s) for key, s in cfg.topics.items()}
    except MalformedTopic as e:
        raise ConfigError(f"bad topic in scenario: {e}") from e
    for key, t in topics.items():
        if t.tenant != cfg.tenant:
            raise ConfigError(f"topic {t} does not belong to tenant {cfg.tenant!r}")

    try:
        cap = broker.authenticate(cfg.tenant, cfg.secret)
    except AuthFailed as e:
        raise ConfigError(f"broker rejected tenant {cfg.tenant!r}") from e
    for t in topics.values():
        broker.create_topic(t, cap)

    if cfg.world_dir is not None:
        try:
            world = load_world(cfg.world_dir)
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError(f"cannot load world from {cfg.world_dir}: {e}") from e
    else:
        world = build_world(WorldParams(seed=cfg.seed,
                                        vehicle_ids=tuple(cfg.vehicle_ids())))

    fleet_of = cfg.vehicle_ids()
    plans = _build_motion_plans(cfg, world)
    params = EnergyParams(pack_kwh=cfg.pack_kwh, tank_gal=cfg.tank_gal)

    states = {}
    last_cum = {}
    onboard = {}
    for vid, kind in fleet_of.items():
        soc0 = 80.0 + 15.0 * unit_hash(cfg.seed, "soc0", vid)
        fuel0 = 70.0 + 25.0 * unit_hash(cfg.seed, "fuel0", vid)
        states[vid] = initial_state(vid, kind, plans[vid].home, soc0, fuel0)
        last_cum[vid] = plans[vid].cum_m(cfg.start_ms)
        onboard[vid] = 0

    published: dict[str, int] = {str(t): 0 for t in topics.values()}
    dropped: dict[str, int] = {str(t): 0 for t in topics.values()}
    fault_counters: dict[tuple, int] = {}

    def publish(key: str, ts_ms: int, payload: bytes, vehicle_id: str | None) -> None:
        topic = topics[key]
        name = str(topic)
        keep = True
        for i, fw in enumerate(cfg.faults):
            if not fw.matches(ts_ms, name, vehicle_id):
                continue
            ck = (i, name, vehicle_id or "")
            n = fault_counters.get(ck, 0)
            fault_counters[ck] = n + 1
            ratio = 1.0 - fw.drop_fraction
            if not math.floor((n + 1) * ratio) > math.floor(n * ratio):
                keep = False
        if keep:
            broker.publish(topic, ts_ms, payload, cap)
            published[name] += 1
        else:
            dropped[name] += 1

    start, end = cfg.start_ms, cfg.end_ms
    heap: list[tuple[int, int, int, str, object]] = []
    push_seq = 0

    def push(ts_ms: int, kind: str, key: object) -> None:
        nonlocal push_seq
        if ts_ms <= end:
            heapq.heappush(heap, (ts_ms, _PRIO[kind], push_seq, kind, key))
            push_seq += 1

    push(start + cfg.weather_period_ms, "weather", None)
    for i in range(len(world.tmc_prototypes)):
        push(start + cfg.traffic_period_ms, "traffic", i)
    for vid in fleet_of:
        push(start + cfg.trip_context_period_ms, "trip_context", vid)
        push(start + cfg.telemetry_period_ms, "telemetry", vid)

    # stop arrivals are known in advance; queue the passenger-counter events now
    for vid, plan in plans.items():
        for trip in plan.trips:
            rows = world.schedule.stop_times[trip.trip_id]
            day_ms = trip.start_ms - rows[0].arrival_s * 1000
            for row in rows:
                arr = day_ms + row.arrival_s * 1000
                if start < arr <= end:
                    last = row.sequence == rows[-1].sequence
                    push(arr, "occupancy", (vid, trip.trip_id, row.stop_id,
                                            row.sequence, last))

    while heap:
        ts, _prio, _seq, kind, key = heapq.heappop(heap)
        if cfg.accel > 0:
            lag = (ts - start) / 1000.0 / cfg.accel - (time.monotonic() - wall_start)
            if lag > 0:
                time.sleep(lag)

        if kind == "weather":
            rec = gen_weather(world.station_id, ts, cfg.seed, cfg.weather_period_ms)
            publish("weather", ts, rec.to_payload(), None)
            push(ts + cfg.weather_period_ms, "weather", None)

        elif kind == "traffic":
            proto = world.tmc_prototypes[key]
            rec = gen_traffic(proto, ts, cfg.seed, cfg.traffic_period_ms)
            publish("traffic", ts, rec.to_payload(), None)
            push(ts + cfg.traffic_period_ms, "traffic", key)

        elif kind == "trip_context":
            vid = key
            pos, _grade, _cum, trip = plans[vid].locate(ts)
            if trip is not None:
                rec = TripContextRecord(vid, ts, (round(pos.lat, 6), round(pos.lon, 6)),
                                        trip.trip_id, trip.route_id, trip.driver_id)
                publish("trip-context", ts, rec.to_payload(), vid)
            push(ts + cfg.trip_context_period_ms, "trip_context", vid)

        elif kind == "telemetry":
            vid = key
            plan = plans[vid]
            pos, grade, cum, trip = plan.locate(ts)
            move = max(0.0, cum - last_cum[vid])
            last_cum[vid] = cum
            ctx = StepContext(ts_ms=ts, new_position=pos, move_m=move,
                              grade_pct=grade if trip is not None else 0.0,
                              trip_id=trip.trip_id if trip else None,
                              route_id=trip.route_id if trip else None,
                              driver_id=trip.driver_id if trip else None,
                              at_depot=trip is None)
            states[vid], rec = step_vehicle(states[vid], cfg.telemetry_period_ms, ctx, params)
            publish(f"telemetry-{fleet_of[vid].value}", ts, rec.to_payload(), vid)
            push(ts + cfg.telemetry_period_ms, "telemetry", vid)

        else:  # occupancy
            vid, trip_id, stop_id, seq, last = key
            if last:
                boarding, alighting = 0, onboard[vid]
            else:
                boarding = int_hash(7, cfg.seed, "board", trip_id, seq)
                alighting = int_hash(onboard[vid] + 1, cfg.seed, "alight", trip_id, seq)
            onboard[vid] += boarding - alighting
            rec = OccupancyRecord(vid, ts, stop_id, boarding, alighting, onboard[vid])
            publish("occupancy", ts, rec.to_payload(), vid)

    broker.sync()
    return SimulationReport(start, end, published, dropped,
                            time.monotonic() - wall_start)
