"""Shared vocabulary: topic names, geography, time windows, canonical JSON.

Everything in this module is an immutable value with pure operations, so it
is safe to share freely across threads and processes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum

EARTH_RADIUS_M = 6_371_008.8  # mean Earth radius

_TOKEN_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")


class MalformedTopic(ValueError):
    """Raised when a topic string or token violates the naming rules."""


class ConfigError(ValueError):
    """A config file or option set cannot produce a runnable pipeline."""


class TimestampBeforeOrigin(ValueError):
    """Raised when a timestamp precedes the window origin."""


class SchemaError(ValueError):
    """Payload does not match the source's documented schema."""


def _check_token(name: str, value: str) -> None:
    if not isinstance(value, str) or not _TOKEN_RE.match(value):
        raise MalformedTopic(f"{name} token {value!r} must match [a-z0-9][a-z0-9-]*")


@dataclass(frozen=True)
class TopicName:
    """Three-tier topic identifier: ``tenant/category/topic``.

    The tenant tier is the unit of authentication; the category groups
    streams (telemetry, weather, ...); the topic tier names the source,
    optionally suffixed with a fleet name (e.g. ``source-electric``).
    """

    tenant: str
    category: str
    topic: str

    def __post_init__(self) -> None:
        _check_token("tenant", self.tenant)
        _check_token("category", self.category)
        _check_token("topic", self.topic)

    def __str__(self) -> str:
        return f"{self.tenant}/{self.category}/{self.topic}"


def parse_topic_name(s: str) -> TopicName:
    """Split ``tenant/category/topic`` into a validated TopicName."""
    parts = s.split("/")
    if len(parts) != 3:
        raise MalformedTopic(f"expected exactly tenant/category/topic, got {s!r}")
    return TopicName(*parts)


def format_topic_name(t: TopicName) -> str:
    return str(t)


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 degrees; ranges enforced at construction."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")


class FleetKind(str, Enum):
    DIESEL = "diesel"
    ELECTRIC = "electric"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class TimeWindowSpec:
    """Windows of ``window_ms`` sliding by ``hop_ms`` from ``origin_ms``.

    Window ``w`` covers the half-open interval
    ``[origin + w*hop, origin + w*hop + window)``.  ``hop == window`` gives
    tumbling windows; hops must tile the window cleanly.
    """

    window_ms: int
    hop_ms: int
    origin_ms: int = 0

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError("hop_ms must be in (0, window_ms]")
        if self.window_ms % self.hop_ms != 0:
            raise ValueError("window_ms must be a multiple of hop_ms")

    def window_start(self, window_id: int) -> int:
        return self.origin_ms + window_id * self.hop_ms

    def window_end(self, window_id: int) -> int:
        return self.window_start(window_id) + self.window_ms


def window_ids_for(ts_ms: int, spec: TimeWindowSpec) -> list[int]:
    """All window ids whose interval contains ``ts_ms``, ascending.

    Interior timestamps belong to exactly ``window_ms / hop_ms`` windows;
    near the origin, window ids that would be negative are excluded.
    """
    if ts_ms < spec.origin_ms:
        raise TimestampBeforeOrigin(f"ts {ts_ms} before origin {spec.origin_ms}")
    rel = ts_ms - spec.origin_ms
    last = rel // spec.hop_ms
    first = (rel - spec.window_ms) // spec.hop_ms + 1
    if first < 0:
        first = 0
    return list(range(first, last + 1))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on the mean-radius sphere."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def canonical_json(obj) -> bytes:
    """Stable byte encoding: sorted keys, no whitespace, UTF-8.

    Used for every payload written to a ledger so that replay comparisons
    can be byte-exact.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def parse_payload(data: bytes) -> dict:
    return json.loads(data.decode("utf-8"))
