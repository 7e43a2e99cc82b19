"""Derived view over the joined stream: spatial + time indexed, append-only.

The store holds no truth of its own — it can always be rebuilt by replaying
the join output topic from the earliest offset, which is also how duplicate
handling works: re-inserting an identical sample is a silent no-op, while a
*different* sample under an existing (vehicle, window) key is a real
conflict and raises.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from ..broker import Broker, Capability
from ..core import SchemaError, TopicName
from ..join import GapRecord, JoinedSample, parse_output
from .rtree import RTree

METERS_PER_MILE = 1609.344


class DuplicateSample(ValueError):
    """Same (vehicle_id, window_id) key with different contents."""


@dataclass(frozen=True)
class StoreParams:
    pack_kwh: float = 200.0            # electric battery capacity behind soc_pct
    tank_gal: float = 100.0            # combustion tank behind fuel_level_pct
    diesel_kwh_per_gal: float = 40.7   # cross-fleet normalization constant

    def __post_init__(self) -> None:
        if min(self.pack_kwh, self.tank_gal, self.diesel_kwh_per_gal) <= 0:
            raise ValueError("store parameters must be positive")


@dataclass(frozen=True)
class StoredSample:
    offset: int
    sample: JoinedSample

    def __getattr__(self, name):
        return getattr(self.sample, name)


@dataclass(frozen=True)
class EnergyIncrement:
    """Consumption between two consecutive samples of one vehicle.

    Attributed entirely to the earlier sample: its timestamp, route,
    fleet, and mapped segment decide where the increment is counted.
    """

    vehicle_id: str
    t0_ms: int
    t1_ms: int
    distance_mi: float
    energy_kwh: float
    charging: bool
    fleet: str
    route_id: str | None
    segment_id: str | None


@dataclass(frozen=True)
class AggregateResult:
    key: str
    energy_kwh: float
    distance_mi: float
    kwh_per_mile: float | None         # absent when no distance was covered
    sample_count: int                  # number of aggregated increments


@dataclass
class IngestReport:
    inserted: int = 0
    duplicates: int = 0
    gaps: int = 0
    schema_errors: int = 0


def compute_energy_increments(samples, params: StoreParams = StoreParams()
                              ) -> tuple[list[EnergyIncrement], int]:
    """Per consecutive pair: miles from the odometer, kWh from SOC or fuel.

    ``samples`` must belong to one vehicle and be sorted by time.  Pairs
    with a backward-running odometer are skipped; the second return value
    counts them.  Charging (or refueling) intervals contribute zero
    consumption and come back flagged.
    """
    out: list[EnergyIncrement] = []
    skipped = 0
    for a, b in zip(samples, samples[1:]):
        if a.vehicle_id != b.vehicle_id:
            raise ValueError("increments need samples of a single vehicle")
        if b.ts_ms < a.ts_ms:
            raise ValueError("samples must be sorted by ts_ms")
        if a.odometer_m is None or b.odometer_m is None or b.odometer_m < a.odometer_m:
            skipped += 1
            continue
        distance_mi = (b.odometer_m - a.odometer_m) / METERS_PER_MILE
        energy = 0.0
        charging = False
        if a.fleet == "electric":
            if a.soc_pct is not None and b.soc_pct is not None:
                delta = b.soc_pct - a.soc_pct
                if delta < 0:
                    energy = -delta / 100.0 * params.pack_kwh
                elif delta > 0:
                    charging = True
            charging = charging or bool(a.charging) or bool(b.charging)
        else:
            if a.fuel_level_pct is not None and b.fuel_level_pct is not None:
                delta = b.fuel_level_pct - a.fuel_level_pct
                if delta < 0:
                    energy = -delta / 100.0 * params.tank_gal * params.diesel_kwh_per_gal
                elif delta > 0:
                    charging = True   # refueled mid-interval
        out.append(EnergyIncrement(a.vehicle_id, a.ts_ms, b.ts_ms, distance_mi,
                                   energy, charging, a.fleet, a.route_id,
                                   a.osm_segment_id))
    return out, skipped


_GROUP_FIELD = {"route": "route_id", "fleet": "fleet", "segment": "segment_id"}


class GeoStore:
    """All joined samples, indexed by position (r-tree) and time."""

    def __init__(self, params: StoreParams = StoreParams(), max_entries: int = 16):
        self.params = params
        self._samples: dict[tuple[str, int], StoredSample] = {}
        self._by_vehicle: dict[str, list[StoredSample]] = {}
        self._tree = RTree(max_entries)

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def tree(self) -> RTree:
        return self._tree

    def insert(self, sample: JoinedSample, offset: int = 0) -> bool:
        """Index one sample; False when an identical one is already stored."""
        key = (sample.vehicle_id, sample.window_id)
        held = self._samples.get(key)
        if held is not None:
            if held.sample == sample:
                return False
            raise DuplicateSample(f"conflicting contents for {key}")
        stored = StoredSample(offset, sample)
        self._samples[key] = stored
        lane = self._by_vehicle.setdefault(sample.vehicle_id, [])
        if lane and lane[-1].ts_ms > sample.ts_ms:
            bisect.insort(lane, stored, key=lambda s: s.ts_ms)
        else:
            lane.append(stored)
        lat, lon = sample.position
        self._tree.insert(lat, lon, key)
        return True

    def get(self, vehicle_id: str, window_id: int) -> StoredSample | None:
        return self._samples.get((vehicle_id, window_id))

    def query_bbox(self, min_lat: float, min_lon: float, max_lat: float,
                   max_lon: float, t0_ms: int, t1_ms: int) -> list[StoredSample]:
        """Samples inside the box (inclusive) with ts in [t0_ms, t1_ms)."""
        if min_lat > max_lat or min_lon > max_lon:
            raise ValueError("bbox bounds out of order")
        if t0_ms > t1_ms:
            raise ValueError("t0_ms must be <= t1_ms")
        hits = []
        for key in self._tree.search(min_lat, min_lon, max_lat, max_lon):
            s = self._samples[key]
            if t0_ms <= s.ts_ms < t1_ms:
                hits.append(s)
        hits.sort(key=lambda s: (s.ts_ms, s.vehicle_id, s.window_id))
        return hits

    def vehicle_increments(self, vehicle_id: str) -> tuple[list[EnergyIncrement], int]:
        lane = self._by_vehicle.get(vehicle_id, [])
        return compute_energy_increments(lane, self.params)

    def aggregate_energy(self, group_by: str, t0_ms: int, t1_ms: int,
                         fleet: str | None = None,
                         route: str | None = None) -> list[AggregateResult]:
        """Energy/distance totals grouped by route, fleet, or road segment.

        An increment is selected by its *earlier* sample: its timestamp must
        fall in [t0_ms, t1_ms) and its fleet/route must match the filters.
        That makes totals additive across any partition of the time range.
        """
        try:
            key_field = _GROUP_FIELD[group_by]
        except KeyError:
            raise ValueError(f"group_by must be one of {sorted(_GROUP_FIELD)}") from None
        if t0_ms > t1_ms:
            raise ValueError("t0_ms must be <= t1_ms")
        totals: dict[str, list] = {}
        for vid in sorted(self._by_vehicle):
            incs, _ = self.vehicle_increments(vid)
            for inc in incs:
                if not t0_ms <= inc.t0_ms < t1_ms:
                    continue
                if fleet is not None and inc.fleet != fleet:
                    continue
                if route is not None and inc.route_id != route:
                    continue
                key = getattr(inc, key_field)
                if key is None:
                    continue
                row = totals.setdefault(key, [0.0, 0.0, 0])
                row[0] += inc.energy_kwh
                row[1] += inc.distance_mi
                row[2] += 1
        return [AggregateResult(key, e, d, (e / d if d > 0 else None), n)
                for key, (e, d, n) in sorted(totals.items())]

    def ingest_topic(self, broker: Broker, topic: TopicName, cap: Capability,
                     batch_size: int = 1000) -> IngestReport:
        """Replay a join output topic from the start into the store."""
        report = IngestReport()
        sub = f"store-ingest-{topic.topic}"
        cursor = broker.open_cursor(topic, "earliest", sub, cap, reset=True)
        while True:
            batch, cursor = broker.read_next(cursor, batch_size)
            if not batch:
                break
            for envelope in batch:
                try:
                    rec = parse_output(envelope.payload)
                except SchemaError:
                    report.schema_errors += 1
                    continue
                if isinstance(rec, GapRecord):
                    report.gaps += 1
                    continue
                if self.insert(rec, envelope.offset):
                    report.inserted += 1
                else:
                    report.duplicates += 1
        broker.drop_subscription(topic, sub, cap)
        return report
