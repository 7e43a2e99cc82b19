from .config import ConfigError, JoinConfig, SourceSpec, preset_config
from .engine import GapRecord, JoinBuffer, JoinedSample, ReadySignal, parse_output
from .enrich import EmptyNetwork, Enricher, EnrichmentUnavailable, SegmentIndex, nearest_segment
from .runner import JoinStats, run_join

__all__ = [
    "ConfigError",
    "EmptyNetwork",
    "Enricher",
    "EnrichmentUnavailable",
    "GapRecord",
    "JoinBuffer",
    "JoinConfig",
    "JoinStats",
    "JoinedSample",
    "ReadySignal",
    "SegmentIndex",
    "SourceSpec",
    "nearest_segment",
    "parse_output",
    "preset_config",
    "run_join",
]
