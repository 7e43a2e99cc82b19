"""Drives a JoinBuffer from broker cursors and publishes closed windows.

Restart safety: every start replays all inputs from the earliest offset and
suppresses output records whose (vehicle, window) already exists on the
output topic.  Combined with the engine's interleaving-independent closing
order this yields exactly-once output without any checkpoint file — the
ledgers themselves are the checkpoint.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..broker import Broker, Capability
from ..core import GeoPoint, SchemaError
from ..staticdata import (
    GtfsSchedule,
    RoadNetwork,
    attach_elevation,
    load_elevation_grid,
    load_gtfs,
    load_road_network,
)
from .config import ConfigError, JoinConfig
from .engine import GapRecord, JoinBuffer, parse_output
from .enrich import Enricher


@dataclass
class JoinStats:
    records_in: int = 0
    late_drops: int = 0
    schema_errors: int = 0
    samples_out: int = 0
    gaps_out: int = 0
    duplicates_suppressed: int = 0
    by_tag: dict = field(default_factory=dict)   # tag -> records consumed


def _load_tmc_geometries(path: Path) -> dict[str, tuple[GeoPoint, ...]]:
    raw = json.loads(path.read_text())
    return {t["tmc_id"]: tuple(GeoPoint(lat, lon) for lat, lon in t["geometry"])
            for t in raw}


def build_enricher(world_dir: str | Path) -> Enricher:
    """Static lookups from a directory of network/terrain/schedule files."""
    root = Path(world_dir)
    network: RoadNetwork = load_road_network(root / "network.jsonl")
    dem = root / "dem.json"
    if dem.exists():
        network = attach_elevation(network, load_elevation_grid(dem))
    schedule: GtfsSchedule | None = None
    if (root / "gtfs").is_dir():
        schedule = load_gtfs(root / "gtfs")
    tmcs = None
    if (root / "tmc.json").exists():
        tmcs = _load_tmc_geometries(root / "tmc.json")
    return Enricher(network, schedule, tmcs)


def _scan_published(broker: Broker, config: JoinConfig,
                    cap: Capability) -> set[tuple[str, int]]:
    """Keys of every record already on the output topic (for dedup)."""
    seen: set[tuple[str, int]] = set()
    sub = f"join-scan-{config.output.topic}"
    cursor = broker.open_cursor(config.output, "earliest", sub, cap, reset=True)
    while True:
        batch, cursor = broker.read_next(cursor, 1000)
        if not batch:
            break
        for env in batch:
            try:
                rec = parse_output(env.payload)
            except SchemaError:
                continue
            seen.add((rec.vehicle_id, rec.window_id))
    broker.drop_subscription(config.output, sub, cap)
    return seen


class _Runner:
    def __init__(self, config: JoinConfig, broker: Broker, cap: Capability,
                 world_dir: str | Path | None):
        self.config = config
        self.broker = broker
        self.cap = cap
        self.world_dir = world_dir
        self.buffer = JoinBuffer(config)
        self.enricher = build_enricher(world_dir) if world_dir is not None else None
        self.stats = JoinStats(by_tag={s.tag: 0 for s in config.inputs})
        self.seen = _scan_published(broker, config, cap)
        self._refresh_anchor: int | None = None
        self._last_data = {s.tag: time.monotonic() for s in config.inputs}
        prefix = f"join-{config.output.tenant}-{config.output.category}-{config.output.topic}"
        self.cursors = {
            s.tag: broker.open_cursor(s.topic, "earliest", f"{prefix}-{s.tag}",
                                      cap, reset=True)
            for s in config.inputs
        }

    def publish_ready(self, signals) -> None:
        for sig in signals:
            rec = self.buffer.close_window(sig.key, sig.window_id, self.enricher)
            if (sig.key, sig.window_id) in self.seen:
                self.stats.duplicates_suppressed += 1
                continue
            self.seen.add((sig.key, sig.window_id))
            self.broker.publish(self.config.output, rec.ts_ms, rec.to_payload(), self.cap)
            if isinstance(rec, GapRecord):
                self.stats.gaps_out += 1
            else:
                self.stats.samples_out += 1

    def maybe_refresh_static(self) -> None:
        """Reload network/schedule files once per refresh interval of event time."""
        if self.world_dir is None:
            return
        anchor = self.buffer.global_max_ts
        if anchor is None:
            return
        if self._refresh_anchor is None:
            self._refresh_anchor = anchor
        elif anchor - self._refresh_anchor >= self.config.static_refresh_ms:
            self.enricher = build_enricher(self.world_dir)
            self._refresh_anchor = anchor

    def pump_once(self, batch_size: int, budget: int | None) -> tuple[int, bool]:
        """One round-robin pass over all inputs; returns (consumed, hit budget)."""
        consumed = 0
        for spec in self.config.inputs:
            take = batch_size
            if budget is not None:
                take = min(take, budget - (self.stats.records_in + consumed))
                if take <= 0:
                    return consumed, True
            batch, self.cursors[spec.tag] = self.broker.read_next(
                self.cursors[spec.tag], take)
            for env in batch:
                self.publish_ready(self.buffer.ingest_record(spec.tag, env))
            consumed += len(batch)
            self.stats.by_tag[spec.tag] += len(batch)
            if batch:
                self._last_data[spec.tag] = time.monotonic()
        self.maybe_refresh_static()
        if budget is not None and self.stats.records_in + consumed >= budget:
            return consumed, True
        return consumed, False

    def finish(self) -> JoinStats:
        self.stats.late_drops = sum(self.buffer.late_drops.values())
        self.stats.schema_errors = sum(self.buffer.schema_errors.values())
        return self.stats


def run_join(config: JoinConfig, broker: Broker, cap: Capability, *,
             world_dir: str | Path | None = None,
             drain: bool = True,
             live_seconds: float | None = None,
             batch_size: int = 500,
             max_input_records: int | None = None) -> JoinStats:
    """Consume all configured inputs and publish merged windows.

    Batch mode (``live_seconds=None``) reads until every input is dry, then
    flushes open windows if ``drain``.  Live mode keeps polling for
    ``live_seconds`` of wall time and advances watermarks for sources that
    stay silent past the idle timeout.  ``max_input_records`` aborts after
    roughly that many records without draining — a crash stand-in for
    restart tests.
    """
    existing = set(broker.topics())
    missing = sorted(str(s.topic) for s in config.inputs if s.topic not in existing)
    if missing:
        raise ConfigError(f"input topics not found: {', '.join(missing)}")
    broker.create_topic(config.output, cap)

    runner = _Runner(config, broker, cap, world_dir)

    if live_seconds is None:
        while True:
            consumed, stop = runner.pump_once(batch_size, max_input_records)
            runner.stats.records_in += consumed
            if stop:
                return runner.finish()   # simulated crash: no drain
            if consumed == 0:
                break
    else:
        deadline = time.monotonic() + live_seconds
        idle_s = config.idle_timeout_ms / 1000.0
        while time.monotonic() < deadline:
            consumed, stop = runner.pump_once(batch_size, max_input_records)
            runner.stats.records_in += consumed
            if stop:
                return runner.finish()
            now = time.monotonic()
            for tag, last in runner._last_data.items():
                if now - last >= idle_s:
                    runner.publish_ready(runner.buffer.advance_idle(tag))
                    runner._last_data[tag] = now
            if consumed == 0:
                time.sleep(0.02)

    if drain:
        runner.publish_ready(runner.buffer.drain())
    broker.sync()
    return runner.finish()
