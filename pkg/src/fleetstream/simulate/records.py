"""Record types for the five live streams and their JSON payload schemas.

Every payload is one JSON object encoded with
:func:`fleetstream.core.canonical_json`, so identical records always encode
to identical bytes.  Floats are rounded at encode time to keep payloads
stable and compact.

Telemetry payload::

    {"vehicle_id": ..., "ts_ms": ..., "fleet": ...,
     "labels": {"gps": [lat, lon], "odometer_m": ..., <fleet fields>}}

Fleet label sets are closed: diesel/hybrid carry ``fuel_level_pct``,
``fuel_rate_gph`` (plus ``trip_id``/``driver_id`` when in service);
electric carries ``soc_pct``, ``battery_current_a``, ``battery_voltage_v``,
``charging``.

Trip-context payload (the schedule-kit stream)::

    {"vehicle_id": ..., "ts_ms": ..., "gps": [lat, lon],
     "trip_id": ..., "route_id": ..., "driver_id": ...}
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import FleetKind, GeoPoint, SchemaError, canonical_json, parse_payload


FLEET_LABELS = {
    FleetKind.DIESEL: frozenset({"gps", "odometer_m", "fuel_level_pct", "fuel_rate_gph",
                                 "trip_id", "driver_id"}),
    FleetKind.HYBRID: frozenset({"gps", "odometer_m", "fuel_level_pct", "fuel_rate_gph",
                                 "trip_id", "driver_id"}),
    FleetKind.ELECTRIC: frozenset({"gps", "odometer_m", "soc_pct", "battery_current_a",
                                   "battery_voltage_v", "charging"}),
}


def _round(x: float, places: int = 4) -> float:
    return round(float(x), places)


@dataclass(frozen=True)
class TelemetryRecord:
    vehicle_id: str
    ts_ms: int
    fleet: FleetKind
    labels: dict

    def __post_init__(self) -> None:
        extra = set(self.labels) - FLEET_LABELS[self.fleet]
        if extra:
            raise SchemaError(f"labels {sorted(extra)} not allowed for {self.fleet.value}")
        if "gps" not in self.labels or "odometer_m" not in self.labels:
            raise SchemaError("telemetry requires gps and odometer_m labels")

    def to_payload(self) -> bytes:
        return canonical_json({
            "vehicle_id": self.vehicle_id,
            "ts_ms": self.ts_ms,
            "fleet": self.fleet.value,
            "labels": self.labels,
        })

    @classmethod
    def from_payload(cls, data: bytes) -> "TelemetryRecord":
        try:
            obj = parse_payload(data)
            return cls(obj["vehicle_id"], int(obj["ts_ms"]),
                       FleetKind(obj["fleet"]), obj["labels"])
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"bad telemetry payload: {e}") from e

    @property
    def position(self) -> GeoPoint:
        lat, lon = self.labels["gps"]
        return GeoPoint(lat, lon)


@dataclass(frozen=True)
class TripContextRecord:
    vehicle_id: str
    ts_ms: int
    gps: tuple[float, float]
    trip_id: str
    route_id: str
    driver_id: str

    def to_payload(self) -> bytes:
        return canonical_json({
            "vehicle_id": self.vehicle_id,
            "ts_ms": self.ts_ms,
            "gps": list(self.gps),
            "trip_id": self.trip_id,
            "route_id": self.route_id,
            "driver_id": self.driver_id,
        })

    @classmethod
    def from_payload(cls, data: bytes) -> "TripContextRecord":
        try:
            obj = parse_payload(data)
            return cls(obj["vehicle_id"], int(obj["ts_ms"]), tuple(obj["gps"]),
                       obj["trip_id"], obj["route_id"], obj["driver_id"])
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"bad trip-context payload: {e}") from e


@dataclass(frozen=True)
class WeatherRecord:
    station_id: str
    ts_ms: int
    temperature_c: float
    wind_speed_ms: float
    wind_direction_deg: float
    precipitation_mmh: float
    humidity_pct: float
    visibility_km: float
    pressure_hpa: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.wind_direction_deg < 360.0:
            raise SchemaError(f"wind_direction_deg {self.wind_direction_deg} outside [0, 360)")
        if self.wind_speed_ms < 0 or self.precipitation_mmh < 0 or self.visibility_km < 0:
            raise SchemaError("wind/precipitation/visibility must be non-negative")
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise SchemaError(f"humidity_pct {self.humidity_pct} outside [0, 100]")
        if self.pressure_hpa <= 0:
            raise SchemaError("pressure_hpa must be positive")

    def to_payload(self) -> bytes:
        return canonical_json({
            "station_id": self.station_id,
            "ts_ms": self.ts_ms,
            "temperature_c": _round(self.temperature_c),
            "wind_speed_ms": _round(self.wind_speed_ms),
            "wind_direction_deg": _round(self.wind_direction_deg),
            "precipitation_mmh": _round(self.precipitation_mmh),
            "humidity_pct": _round(self.humidity_pct),
            "visibility_km": _round(self.visibility_km),
            "pressure_hpa": _round(self.pressure_hpa),
        })

    @classmethod
    def from_payload(cls, data: bytes) -> "WeatherRecord":
        try:
            obj = parse_payload(data)
            return cls(obj["station_id"], int(obj["ts_ms"]), obj["temperature_c"],
                       obj["wind_speed_ms"], obj["wind_direction_deg"],
                       obj["precipitation_mmh"], obj["humidity_pct"],
                       obj["visibility_km"], obj["pressure_hpa"])
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"bad weather payload: {e}") from e


@dataclass(frozen=True)
class TrafficRecord:
    tmc_id: str
    ts_ms: int
    freeflow_speed_kmh: float
    current_speed_kmh: float
    jam_factor: float
    confidence: float
    geometry: tuple[GeoPoint, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.freeflow_speed_kmh <= 0:
            raise SchemaError("freeflow_speed_kmh must be positive")
        if self.current_speed_kmh < 0:
            raise SchemaError("current_speed_kmh must be non-negative")
        if self.current_speed_kmh > self.freeflow_speed_kmh * 1.2:
            raise SchemaError("current speed exceeds bounded overshoot of free flow")
        if not 0.0 <= self.jam_factor <= 10.0:
            raise SchemaError(f"jam_factor {self.jam_factor} outside [0, 10]")
        if not 0.0 <= self.confidence <= 1.0:
            raise SchemaError(f"confidence {self.confidence} outside [0, 1]")
        if len(self.geometry) < 2:
            raise SchemaError("geometry needs at least 2 points")

    def to_payload(self) -> bytes:
        return canonical_json({
            "tmc_id": self.tmc_id,
            "ts_ms": self.ts_ms,
            "freeflow_speed_kmh": _round(self.freeflow_speed_kmh),
            "current_speed_kmh": _round(self.current_speed_kmh),
            "jam_factor": _round(self.jam_factor),
            "confidence": _round(self.confidence),
            "geometry": [[_round(p.lat, 6), _round(p.lon, 6)] for p in self.geometry],
        })

    @classmethod
    def from_payload(cls, data: bytes) -> "TrafficRecord":
        try:
            obj = parse_payload(data)
            geometry = tuple(GeoPoint(lat, lon) for lat, lon in obj["geometry"])
            return cls(obj["tmc_id"], int(obj["ts_ms"]), obj["freeflow_speed_kmh"],
                       obj["current_speed_kmh"], obj["jam_factor"], obj["confidence"],
                       geometry)
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"bad traffic payload: {e}") from e


@dataclass(frozen=True)
class OccupancyRecord:
    vehicle_id: str
    ts_ms: int
    stop_id: str
    boarding_count: int
    alighting_count: int
    onboard_estimate: int

    def __post_init__(self) -> None:
        if min(self.boarding_count, self.alighting_count, self.onboard_estimate) < 0:
            raise SchemaError("occupancy counts must be non-negative")

    def to_payload(self) -> bytes:
        return canonical_json({
            "vehicle_id": self.vehicle_id,
            "ts_ms": self.ts_ms,
            "stop_id": self.stop_id,
            "boarding_count": self.boarding_count,
            "alighting_count": self.alighting_count,
            "onboard_estimate": self.onboard_estimate,
        })

    @classmethod
    def from_payload(cls, data: bytes) -> "OccupancyRecord":
        try:
            obj = parse_payload(data)
            return cls(obj["vehicle_id"], int(obj["ts_ms"]), obj["stop_id"],
                       int(obj["boarding_count"]), int(obj["alighting_count"]),
                       int(obj["onboard_estimate"]))
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"bad occupancy payload: {e}") from e
