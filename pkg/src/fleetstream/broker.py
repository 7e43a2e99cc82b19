"""Tenant-scoped publish-subscribe broker over per-topic append-only ledgers.

One broker process owns a data directory laid out as
``<data_dir>/<tenant>/<category>/<topic>/``; each leaf directory is a
:class:`fleetstream.ledger.TopicLedger`.  All access goes through a
:class:`Capability` obtained from :meth:`Broker.authenticate`, and a
capability only ever unlocks topics whose first tier equals its tenant.

Subscriptions are durable: each topic directory carries a ``cursors.json``
mapping subscription ids to their next offset, updated on every
acknowledged read, so a restarted consumer resumes exactly where it left
off (the playback contract).
"""

from __future__ import annotations

import hmac
import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .core import TopicName, parse_topic_name
from .ledger import DEFAULT_SEGMENT_BYTES, TopicLedger


class AuthFailed(PermissionError):
    """Unknown tenant or wrong secret; deliberately indistinguishable."""


class Forbidden(PermissionError):
    """Capability tenant does not match the topic's tenant tier."""


class UnknownTopic(KeyError):
    pass


class OffsetOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class TenantCredential:
    tenant: str
    secret: str


@dataclass(frozen=True)
class Capability:
    """Proof of authentication, scoped to one tenant."""

    tenant: str


@dataclass(frozen=True)
class RecordEnvelope:
    topic: TopicName
    offset: int
    ts_ms: int
    payload: bytes


@dataclass(frozen=True)
class Cursor:
    topic: TopicName
    subscription_id: str
    next_offset: int


@dataclass(frozen=True)
class TopicStats:
    topic: TopicName
    total_records: int
    first_ts_ms: int | None  # min event time over the ledger
    last_ts_ms: int | None  # max event time over the ledger


@dataclass
class BrokerConfig:
    data_dir: str
    tenants: list[TenantCredential]
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    segment_bytes: int = DEFAULT_SEGMENT_BYTES
    fsync_each: bool = True

    @classmethod
    def from_file(cls, path: str | Path) -> "BrokerConfig":
        raw = json.loads(Path(path).read_text())
        tenants = [TenantCredential(t["name"], t["secret"]) for t in raw["tenants"]]
        return cls(
            data_dir=raw["data_dir"],
            tenants=tenants,
            listen_host=raw.get("listen_host", "127.0.0.1"),
            listen_port=raw.get("listen_port", 8080),
            segment_bytes=raw.get("segment_bytes", DEFAULT_SEGMENT_BYTES),
            fsync_each=raw.get("fsync_each", True),
        )


class Broker:
    """Single-process broker; safe for concurrent use from many threads."""

    def __init__(self, data_dir: str | Path, tenants: list[TenantCredential] | dict[str, str],
                 segment_bytes: int = DEFAULT_SEGMENT_BYTES, fsync_each: bool = True):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        if isinstance(tenants, dict):
            tenants = [TenantCredential(k, v) for k, v in tenants.items()]
        self._secrets = {t.tenant: t.secret for t in tenants}
        self.segment_bytes = segment_bytes
        self.fsync_each = fsync_each
        self._ledgers: dict[TopicName, TopicLedger] = {}
        self._locks: dict[TopicName, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._discover_topics()

    @classmethod
    def from_config(cls, config: BrokerConfig) -> "Broker":
        return cls(config.data_dir, config.tenants,
                   segment_bytes=config.segment_bytes, fsync_each=config.fsync_each)

    def _discover_topics(self) -> None:
        for seg_dir in sorted(p for p in self.data_dir.glob("*/*/*") if p.is_dir()):
            rel = seg_dir.relative_to(self.data_dir)
            name = parse_topic_name("/".join(rel.parts))
            self._open_ledger(name)

    def _topic_dir(self, name: TopicName) -> Path:
        return self.data_dir / name.tenant / name.category / name.topic

    def _open_ledger(self, name: TopicName) -> TopicLedger:
        ledger = TopicLedger(self._topic_dir(name), self.segment_bytes, self.fsync_each)
        self._ledgers[name] = ledger
        self._locks[name] = threading.Lock()
        return ledger

    def _ledger(self, name: TopicName, cap: Capability) -> TopicLedger:
        self._check(name, cap)
        try:
            return self._ledgers[name]
        except KeyError:
            raise UnknownTopic(str(name)) from None

    @staticmethod
    def _check(name: TopicName, cap: Capability) -> None:
        if cap.tenant != name.tenant:
            raise Forbidden(f"capability for {cap.tenant!r} cannot access {name}")

    # -- public surface ---------------------------------------------------

    def authenticate(self, tenant: str, secret: str) -> Capability:
        expected = self._secrets.get(tenant, "")
        # compare even for unknown tenants so the error reveals nothing
        if not hmac.compare_digest(expected.encode(), secret.encode()) or tenant not in self._secrets:
            raise AuthFailed("unknown tenant or bad secret")
        return Capability(tenant)

    def create_topic(self, name: TopicName, cap: Capability) -> None:
        self._check(name, cap)
        with self._registry_lock:
            if name not in self._ledgers:
                self._open_ledger(name)

    def topics(self) -> list[TopicName]:
        return sorted(self._ledgers, key=str)

    def publish(self, topic: TopicName, ts_ms: int, payload: bytes, cap: Capability) -> int:
        ledger = self._ledger(topic, cap)
        with self._locks[topic]:
            return ledger.append(ts_ms, payload)

    def open_cursor(self, topic: TopicName, start, subscription_id: str,
                    cap: Capability, reset: bool = False) -> Cursor:
        """Start is ``"earliest"``, ``"latest"``, or an integer offset.

        An existing subscription id resumes from its persisted position
        regardless of ``start`` unless ``reset`` forces a reposition.
        """
        ledger = self._ledger(topic, cap)
        saved = self._load_cursors(topic)
        if subscription_id in saved and not reset:
            return Cursor(topic, subscription_id, saved[subscription_id])
        if start == "earliest":
            next_offset = 0
        elif start == "latest":
            next_offset = ledger.length
        else:
            next_offset = int(start)
            if not 0 <= next_offset <= ledger.length:
                raise OffsetOutOfRange(f"offset {next_offset} outside [0, {ledger.length}]")
        with self._locks[topic]:
            saved = self._load_cursors(topic)
            saved[subscription_id] = next_offset
            self._store_cursors(topic, saved)
        return Cursor(topic, subscription_id, next_offset)

    def read_next(self, cursor: Cursor, max_records: int) -> tuple[list[RecordEnvelope], Cursor]:
        """Batch of records in offset order; empty batch when caught up."""
        try:
            ledger = self._ledgers[cursor.topic]
        except KeyError:
            raise UnknownTopic(str(cursor.topic)) from None
        rows = ledger.read(cursor.next_offset, max_records)
        if not rows:
            return [], cursor
        batch = [RecordEnvelope(cursor.topic, off, ts, payload) for off, ts, payload in rows]
        advanced = Cursor(cursor.topic, cursor.subscription_id, rows[-1][0] + 1)
        with self._locks[cursor.topic]:
            saved = self._load_cursors(cursor.topic)
            saved[cursor.subscription_id] = advanced.next_offset
            self._store_cursors(cursor.topic, saved)
        return batch, advanced

    def drop_subscription(self, topic: TopicName, subscription_id: str, cap: Capability) -> None:
        self._ledger(topic, cap)
        with self._locks[topic]:
            saved = self._load_cursors(topic)
            if saved.pop(subscription_id, None) is not None:
                self._store_cursors(topic, saved)

    def count_in_range(self, topic: TopicName, t0_ms: int, t1_ms: int, cap: Capability) -> int:
        if t0_ms > t1_ms:
            raise ValueError("t0_ms must be <= t1_ms")
        return self._ledger(topic, cap).count_in_range(t0_ms, t1_ms)

    def topic_stats(self, topic: TopicName, cap: Capability) -> TopicStats:
        ledger = self._ledger(topic, cap)
        bounds = ledger.ts_bounds()
        first, last = bounds if bounds else (None, None)
        return TopicStats(topic, ledger.length, first, last)

    def all_stats(self) -> list[TopicStats]:
        """Stats for every registered topic; read-only, used by the gateway."""
        out = []
        for name in self.topics():
            ledger = self._ledgers[name]
            bounds = ledger.ts_bounds()
            first, last = bounds if bounds else (None, None)
            out.append(TopicStats(name, ledger.length, first, last))
        return out

    def sync(self) -> None:
        """Force every ledger's tail onto disk (used when fsync-per-record is off)."""
        for ledger in self._ledgers.values():
            ledger.sync()

    def close(self) -> None:
        for ledger in self._ledgers.values():
            ledger.close()

    # -- cursor persistence -------------------------------------------------

    def _cursor_file(self, topic: TopicName) -> Path:
        return self._topic_dir(topic) / "cursors.json"

    def _load_cursors(self, topic: TopicName) -> dict[str, int]:
        path = self._cursor_file(topic)
        if not path.exists():
            return {}
        return json.loads(path.read_text())

    def _store_cursors(self, topic: TopicName, cursors: dict[str, int]) -> None:
        path = self._cursor_file(topic)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(cursors, sort_keys=True))
        tmp.replace(path)
