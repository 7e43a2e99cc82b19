"""Join topology: which topics feed the merge, how they are keyed, where output goes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core import (ConfigError, MalformedTopic, TimeWindowSpec, TopicName,
                    parse_topic_name)

KINDS = ("telemetry", "trip_context", "weather", "traffic", "occupancy")

# per-vehicle sources carry a vehicle_id; weather/traffic broadcast to every key
KEYED_KINDS = ("telemetry", "trip_context", "occupancy")


@dataclass(frozen=True)
class SourceSpec:
    tag: str
    topic: TopicName
    kind: str

    def __post_init__(self) -> None:
        if not self.tag:
            raise ConfigError("source tag must be non-empty")
        if self.kind not in KINDS:
            raise ConfigError(f"source kind {self.kind!r} not one of {KINDS}")


@dataclass(frozen=True)
class JoinConfig:
    inputs: tuple[SourceSpec, ...]
    output: TopicName
    window: TimeWindowSpec = field(default_factory=lambda: TimeWindowSpec(5000, 5000))
    allowed_lateness_ms: int = 10_000
    idle_timeout_ms: int = 30_000
    static_refresh_ms: int = 86_400_000

    def __post_init__(self) -> None:
        tags = [s.tag for s in self.inputs]
        if len(tags) != len(set(tags)):
            raise ConfigError("source tags must be unique")
        if not self.inputs:
            raise ConfigError("join needs at least one input")
        if any(s.topic == self.output for s in self.inputs):
            raise ConfigError("output topic must differ from every input")
        if self.allowed_lateness_ms < 0:
            raise ConfigError("allowed_lateness_ms must be >= 0")
        if self.idle_timeout_ms <= 0 or self.static_refresh_ms <= 0:
            raise ConfigError("idle_timeout_ms and static_refresh_ms must be positive")

    def source(self, tag: str) -> SourceSpec:
        for s in self.inputs:
            if s.tag == tag:
                return s
        raise KeyError(tag)

    @classmethod
    def from_dict(cls, raw: dict) -> "JoinConfig":
        try:
            inputs = tuple(
                SourceSpec(s["tag"], parse_topic_name(s["topic"]), s["kind"])
                for s in raw["inputs"]
            )
            output = parse_topic_name(raw["output"])
            window = TimeWindowSpec(int(raw.get("window_ms", 5000)),
                                    int(raw.get("hop_ms", raw.get("window_ms", 5000))),
                                    int(raw.get("origin_ms", 0)))
            return cls(inputs, output, window,
                       int(raw.get("allowed_lateness_ms", 10_000)),
                       int(raw.get("idle_timeout_ms", 30_000)),
                       int(raw.get("static_refresh_ms", 86_400_000)))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"bad join config: {e}") from e
        except (MalformedTopic, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path: str | Path) -> "JoinConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"join config not found: {path}") from e
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e
        return cls.from_dict(raw)


DEFAULT_INPUTS = (
    ("viriciti-diesel", "carta/telemetry/viriciti-diesel", "telemetry"),
    ("viriciti-electric", "carta/telemetry/viriciti-electric", "telemetry"),
    ("viriciti-hybrid", "carta/telemetry/viriciti-hybrid", "telemetry"),
    ("clever", "carta/telemetry/clever", "trip_context"),
    ("darksky", "carta/weather/darksky", "weather"),
    ("here", "carta/traffic/here", "traffic"),
    ("apc", "carta/occupancy/apc", "occupancy"),
)

PRESET_WINDOWS = {"tumbling-5s": (5000, 5000), "tumbling-1s": (1000, 1000)}


def preset_config(preset: str = "tumbling-5s",
                  output: str = "carta/merged/enriched",
                  **overrides) -> JoinConfig:
    """Full seven-source topology with one of the stock window presets."""
    if preset not in PRESET_WINDOWS:
        raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESET_WINDOWS)}")
    window_ms, hop_ms = PRESET_WINDOWS[preset]
    inputs = tuple(SourceSpec(tag, parse_topic_name(topic), kind)
                   for tag, topic, kind in DEFAULT_INPUTS)
    return JoinConfig(inputs, parse_topic_name(output),
                      TimeWindowSpec(window_ms, hop_ms), **overrides)
