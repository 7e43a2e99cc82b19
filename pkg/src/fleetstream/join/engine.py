"""Windowed latest-per-source merge over broker topics.

Buffering rules:

- A record lands in every window that contains its timestamp and replaces
  the stored record for its (key, window, source) slot only if its
  (ts_ms, offset) is greater — so buffer contents depend on ledger
  contents, never on arrival interleaving.
- Each source's watermark is max(seen ts) - allowed_lateness and never
  moves backwards.  A record older than its source's watermark is dropped
  and counted, which means a closed window can never be affected
  retroactively.
- A window is ready once min-over-sources watermark reaches its end.
  Ready signals surface sorted by (window end, key); since the minimum
  watermark is monotone, the overall emission order is the same for every
  interleaving, making output topics byte-identical across replays.

Weather joins every key in the window; traffic is kept per corridor and
resolved to a sample's corridor during enrichment.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field

from ..broker import RecordEnvelope
from ..core import SchemaError, canonical_json, parse_payload, window_ids_for
from .config import JoinConfig
from .enrich import Enricher, EnrichmentUnavailable

_SAMPLE_FIELDS = (
    "trip_id", "route_id", "driver_id", "odometer_m", "soc_pct",
    "battery_current_a", "battery_voltage_v", "charging",
    "fuel_level_pct", "fuel_rate_gph",
    "osm_segment_id", "segment_distance_m", "elevation_m", "grade_pct",
    "temperature_c", "humidity_pct", "wind_speed_ms", "precipitation_mmh",
    "tmc_id", "current_speed_kmh", "jam_factor", "onboard_estimate",
)


@dataclass
class JoinedSample:
    """One output row per (vehicle, window): latest value of every source."""

    vehicle_id: str
    window_id: int
    ts_ms: int                      # window end
    fleet: str
    position: tuple[float, float]
    sources: dict = field(default_factory=dict)   # tag -> bool
    flags: dict = field(default_factory=dict)     # route_mismatch, enrichment_unavailable
    trip_id: str | None = None
    route_id: str | None = None
    driver_id: str | None = None
    odometer_m: float | None = None
    soc_pct: float | None = None
    battery_current_a: float | None = None
    battery_voltage_v: float | None = None
    charging: bool | None = None
    fuel_level_pct: float | None = None
    fuel_rate_gph: float | None = None
    osm_segment_id: str | None = None
    segment_distance_m: float | None = None
    elevation_m: float | None = None
    grade_pct: float | None = None
    temperature_c: float | None = None
    humidity_pct: float | None = None
    wind_speed_ms: float | None = None
    precipitation_mmh: float | None = None
    tmc_id: str | None = None
    current_speed_kmh: float | None = None
    jam_factor: float | None = None
    onboard_estimate: int | None = None

    def to_payload(self) -> bytes:
        obj = {
            "kind": "sample",
            "vehicle_id": self.vehicle_id,
            "window_id": self.window_id,
            "ts_ms": self.ts_ms,
            "fleet": self.fleet,
            "position": list(self.position),
            "sources": self.sources,
            "flags": self.flags,
        }
        for name in _SAMPLE_FIELDS:
            obj[name] = getattr(self, name)
        return canonical_json(obj)

    @classmethod
    def from_payload_obj(cls, obj: dict) -> "JoinedSample":
        kw = {name: obj.get(name) for name in _SAMPLE_FIELDS}
        return cls(obj["vehicle_id"], obj["window_id"], obj["ts_ms"], obj["fleet"],
                   tuple(obj["position"]), obj.get("sources", {}),
                   obj.get("flags", {}), **kw)


@dataclass
class GapRecord:
    """A window in which a vehicle appeared but produced no telemetry."""

    vehicle_id: str
    window_id: int
    ts_ms: int                      # window end
    missing: tuple[str, ...]        # tags with no data in this window

    def to_payload(self) -> bytes:
        return canonical_json({
            "kind": "gap",
            "vehicle_id": self.vehicle_id,
            "window_id": self.window_id,
            "ts_ms": self.ts_ms,
            "missing": list(self.missing),
        })


def parse_output(data: bytes) -> JoinedSample | GapRecord:
    obj = parse_payload(data)
    kind = obj.get("kind")
    if kind == "sample":
        return JoinedSample.from_payload_obj(obj)
    if kind == "gap":
        return GapRecord(obj["vehicle_id"], obj["window_id"], obj["ts_ms"],
                         tuple(obj["missing"]))
    raise SchemaError(f"unknown output kind {kind!r}")


@dataclass(frozen=True)
class ReadySignal:
    window_id: int
    window_end_ms: int
    key: str


def _require(obj: dict, key: str, types) -> object:
    value = obj.get(key)
    if not isinstance(value, types):
        raise SchemaError(f"field {key!r} missing or mistyped")
    return value


class JoinBuffer:
    """All open window state for one join topology."""

    def __init__(self, config: JoinConfig):
        self.config = config
        self.window = config.window
        self._keyed_tags = {s.tag for s in config.inputs
                            if s.kind in ("telemetry", "trip_context", "occupancy")}
        self._telemetry_tags = {s.tag for s in config.inputs if s.kind == "telemetry"}
        self._kind_of = {s.tag: s.kind for s in config.inputs}
        # (key, window) -> tag -> (ts, offset, parsed payload)
        self._slots: dict[tuple[str, int], dict[str, tuple[int, int, dict]]] = {}
        # window -> tag -> weather slot or {tmc_id: slot}
        self._broadcast: dict[int, dict[str, object]] = {}
        self._open: dict[int, set[str]] = {}
        self._open_ids: list[int] = []
        self._pending_close: dict[int, int] = {}
        self._max_ts: dict[str, int] = {}
        self._watermarks: dict[str, float] = {s.tag: -math.inf for s in config.inputs}
        self.late_drops: dict[str, int] = {s.tag: 0 for s in config.inputs}
        self.schema_errors: dict[str, int] = {s.tag: 0 for s in config.inputs}

    # -- watermark helpers ----------------------------------------------------

    def watermark(self, tag: str) -> float:
        return self._watermarks[tag]

    def _min_watermark(self) -> float:
        return min(self._watermarks.values())

    @property
    def global_max_ts(self) -> int | None:
        return max(self._max_ts.values()) if self._max_ts else None

    def _window_end(self, window_id: int) -> int:
        return self.window.origin_ms + window_id * self.window.hop_ms + self.window.window_ms

    # -- ingestion -------------------------------------------------------------

    def ingest_record(self, tag: str, envelope: RecordEnvelope) -> list[ReadySignal]:
        """Route one record into its windows; report windows that became ready."""
        kind = self._kind_of.get(tag)
        if kind is None:
            raise KeyError(f"unknown source tag {tag!r}")
        ts = envelope.ts_ms
        if ts < self.window.origin_ms or ts < self._watermarks[tag]:
            self.late_drops[tag] += 1
            return []
        try:
            obj = self._parse(kind, envelope.payload)
        except SchemaError:
            self.schema_errors[tag] += 1
            return []

        if ts > self._max_ts.get(tag, -1):
            self._max_ts[tag] = ts
            self._watermarks[tag] = max(self._watermarks[tag],
                                        ts - self.config.allowed_lateness_ms)

        spec = self.window
        if spec.hop_ms == spec.window_ms:  # tumbling fast path
            ids = [(ts - spec.origin_ms) // spec.hop_ms]
        else:
            ids = window_ids_for(ts, spec)
        entry = (ts, envelope.offset, obj)

        if kind in ("telemetry", "trip_context", "occupancy"):
            key = obj["vehicle_id"]
            for wid in ids:
                slot = self._slots.get((key, wid))
                if slot is None:
                    self._slots[(key, wid)] = slot = {}
                    self._register(wid, key)
                held = slot.get(tag)
                if held is None or (ts, envelope.offset) > held[:2]:
                    slot[tag] = entry
        elif kind == "weather":
            for wid in ids:
                per_tag = self._broadcast.setdefault(wid, {})
                held = per_tag.get(tag)
                if held is None or (ts, envelope.offset) > held[:2]:
                    per_tag[tag] = entry
        else:  # traffic, keyed by corridor
            tmc = obj["tmc_id"]
            for wid in ids:
                per_tmc = self._broadcast.setdefault(wid, {}).setdefault(tag, {})
                held = per_tmc.get(tmc)
                if held is None or (ts, envelope.offset) > held[:2]:
                    per_tmc[tmc] = entry

        return self._collect_ready()

    def _parse(self, kind: str, payload: bytes) -> dict:
        try:
            obj = parse_payload(payload)
        except ValueError as exc:
            raise SchemaError("payload is not valid JSON") from exc
        if not isinstance(obj, dict):
            raise SchemaError("payload is not a JSON object")
        if kind in ("telemetry", "trip_context", "occupancy"):
            _require(obj, "vehicle_id", str)
        if kind == "telemetry":
            labels = _require(obj, "labels", dict)
            if "gps" not in labels or "odometer_m" not in labels:
                raise SchemaError("telemetry labels need gps and odometer_m")
            _require(obj, "fleet", str)
        elif kind == "weather":
            _require(obj, "temperature_c", (int, float))
            _require(obj, "humidity_pct", (int, float))
        elif kind == "traffic":
            _require(obj, "tmc_id", str)
            _require(obj, "current_speed_kmh", (int, float))
            _require(obj, "jam_factor", (int, float))
        elif kind == "occupancy":
            _require(obj, "onboard_estimate", int)
        return obj

    def _register(self, wid: int, key: str) -> None:
        keys = self._open.get(wid)
        if keys is None:
            self._open[wid] = keys = set()
            insort(self._open_ids, wid)
        keys.add(key)

    def _collect_ready(self) -> list[ReadySignal]:
        return self._pop_ready(self._min_watermark())

    def _pop_ready(self, up_to: float) -> list[ReadySignal]:
        out: list[ReadySignal] = []
        while self._open_ids and self._window_end(self._open_ids[0]) <= up_to:
            wid = self._open_ids.pop(0)
            end = self._window_end(wid)
            keys = self._open.pop(wid)
            out.extend(ReadySignal(wid, end, k) for k in sorted(keys))
            self._pending_close[wid] = len(keys)
        self._purge_broadcast(up_to)
        return sorted(out, key=lambda s: (s.window_end_ms, s.key))

    def _purge_broadcast(self, up_to: float) -> None:
        floor_id = self._open_ids[0] if self._open_ids else None
        for wid in [w for w in self._broadcast
                    if self._window_end(w) <= up_to and w not in self._pending_close]:
            if floor_id is not None and wid >= floor_id:
                continue
            del self._broadcast[wid]

    def advance_idle(self, tag: str) -> list[ReadySignal]:
        """Let a silent source's watermark follow the liveliest one (idle timeout)."""
        anchor = self.global_max_ts
        if anchor is None:
            return []
        self._watermarks[tag] = max(self._watermarks[tag],
                                    anchor - self.config.allowed_lateness_ms)
        return self._pop_ready(self._min_watermark())

    def drain(self) -> list[ReadySignal]:
        """Flush every open window (end of a replay / clean shutdown)."""
        for tag in self._watermarks:
            self._watermarks[tag] = math.inf
        return self._pop_ready(math.inf)

    @property
    def open_windows(self) -> int:
        return sum(len(keys) for keys in self._open.values())

    # -- closing ----------------------------------------------------------------

    def close_window(self, key: str, window_id: int,
                     enricher: Enricher | None) -> JoinedSample | GapRecord:
        """Assemble the output record for one ready (key, window); frees its state."""
        slot = self._slots.pop((key, window_id), None)
        if slot is None:
            raise KeyError(f"window ({key!r}, {window_id}) is not open")
        remaining = self._pending_close.get(window_id, 0) - 1
        if remaining > 0:
            self._pending_close[window_id] = remaining
        else:
            self._pending_close.pop(window_id, None)

        broadcast = self._broadcast.get(window_id, {})
        if remaining <= 0 and (not self._open_ids or window_id < self._open_ids[0]):
            self._broadcast.pop(window_id, None)
        end = self._window_end(window_id)

        telemetry = None
        for tag in self._telemetry_tags:
            held = slot.get(tag)
            if held is not None and (telemetry is None or held[:2] > telemetry[1][:2]):
                telemetry = (tag, held)

        present = {tag for tag in slot}
        weather_entry = None
        traffic_slots: dict[str, tuple[int, int, dict]] = {}
        for tag, value in broadcast.items():
            if self._kind_of[tag] == "weather":
                present.add(tag)
                if weather_entry is None or value[:2] > weather_entry[:2]:
                    weather_entry = value
            else:
                if value:
                    present.add(tag)
                for tmc_id, held in value.items():
                    kept = traffic_slots.get(tmc_id)
                    if kept is None or held[:2] > kept[:2]:
                        traffic_slots[tmc_id] = held
        traffic_by_tmc = {tmc: held[2] for tmc, held in traffic_slots.items()}

        if telemetry is None:
            missing = tuple(sorted(s.tag for s in self.config.inputs
                                   if s.tag not in present))
            return GapRecord(key, window_id, end, missing)

        _tel_tag, (tel_ts, tel_off, tel) = telemetry
        labels = tel["labels"]
        sample = JoinedSample(
            vehicle_id=key,
            window_id=window_id,
            ts_ms=end,
            fleet=tel["fleet"],
            position=tuple(labels["gps"]),
            sources={s.tag: s.tag in present for s in self.config.inputs},
            flags={"route_mismatch": False, "enrichment_unavailable": False},
            odometer_m=labels.get("odometer_m"),
            soc_pct=labels.get("soc_pct"),
            battery_current_a=labels.get("battery_current_a"),
            battery_voltage_v=labels.get("battery_voltage_v"),
            charging=labels.get("charging"),
            fuel_level_pct=labels.get("fuel_level_pct"),
            fuel_rate_gph=labels.get("fuel_rate_gph"),
            trip_id=labels.get("trip_id"),
            driver_id=labels.get("driver_id"),
        )

        context = self._latest_of_kind(slot, "trip_context")
        if context is not None:
            sample.trip_id = context["trip_id"]
            sample.route_id = context["route_id"]
            sample.driver_id = context["driver_id"]
        occupancy = self._latest_of_kind(slot, "occupancy")
        if occupancy is not None:
            sample.onboard_estimate = occupancy["onboard_estimate"]
        if weather_entry is not None:
            w = weather_entry[2]
            sample.temperature_c = w["temperature_c"]
            sample.humidity_pct = w["humidity_pct"]
            sample.wind_speed_ms = w.get("wind_speed_ms")
            sample.precipitation_mmh = w.get("precipitation_mmh")

        if enricher is None:
            sample.flags["enrichment_unavailable"] = True
        else:
            try:
                enricher.enrich(sample, traffic_by_tmc)
            except EnrichmentUnavailable:
                sample.flags["enrichment_unavailable"] = True
        # a sample's traffic flag means "corridor resolved", not "topic had data"
        for spec in self.config.inputs:
            if spec.kind == "traffic":
                sample.sources[spec.tag] = sample.tmc_id is not None
        return sample

    def _latest_of_kind(self, slot: dict, kind: str) -> dict | None:
        best = None
        for tag, held in slot.items():
            if self._kind_of[tag] == kind:
                if best is None or held[:2] > best[:2]:
                    best = held
        return best[2] if best is not None else None
