"""Synthetic corridor speed reports.

Congestion follows a daily two-peak profile (morning ~08:00, evening
~17:30) with small smoothed noise.  The jam factor maps the current/free
flow ratio onto [0, 10]:

    jam_factor = 10 * (1 - current / freeflow), clamped to [0, 10]

so free flow reports 0 and a standstill reports 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import GeoPoint
from .records import TrafficRecord
from .rng import unit_hash
from .weather import MS_PER_DAY

DEFAULT_PERIOD_MS = 60_000


def congestion_factor(hour: float) -> float:
    """Fraction of free-flow speed at the given hour of day; two rush-hour dips."""
    am = 0.45 * math.exp(-(((hour - 8.0) / 1.4) ** 2))
    pm = 0.50 * math.exp(-(((hour - 17.5) / 1.6) ** 2))
    return 1.0 - am - pm


def current_speed_for(freeflow_kmh: float, ts_ms: int, seed: int, tmc_id: str,
                      period_ms: int = DEFAULT_PERIOD_MS) -> float:
    k = ts_ms // period_ms
    hour = (ts_ms % MS_PER_DAY) / 3_600_000.0
    draws = (unit_hash(seed, tmc_id, "speed", k - i) for i in range(4))
    noise = (sum(draws) / 4.0 - 0.5) * 0.12
    return freeflow_kmh * min(1.2, max(0.0, congestion_factor(hour) + noise))


def jam_factor_for(current_kmh: float, freeflow_kmh: float) -> float:
    return min(10.0, max(0.0, 10.0 * (1.0 - current_kmh / freeflow_kmh)))


@dataclass(frozen=True)
class TrafficModel:
    tmc_id: str
    freeflow_speed_kmh: float
    geometry: tuple[GeoPoint, ...]
    seed: int
    period_ms: int = DEFAULT_PERIOD_MS

    def at(self, ts_ms: int) -> TrafficRecord:
        current = current_speed_for(self.freeflow_speed_kmh, ts_ms, self.seed,
                                    self.tmc_id, self.period_ms)
        k = ts_ms // self.period_ms
        confidence = 0.7 + 0.3 * unit_hash(self.seed, self.tmc_id, "conf", k)
        return TrafficRecord(
            tmc_id=self.tmc_id,
            ts_ms=ts_ms,
            freeflow_speed_kmh=self.freeflow_speed_kmh,
            current_speed_kmh=current,
            jam_factor=jam_factor_for(current, self.freeflow_speed_kmh),
            confidence=confidence,
            geometry=self.geometry,
        )


def gen_traffic(prototype: TrafficRecord, ts_ms: int, seed: int,
                period_ms: int = DEFAULT_PERIOD_MS) -> TrafficRecord:
    """One report for the corridor described by ``prototype`` (id, geometry, free flow)."""
    model = TrafficModel(prototype.tmc_id, prototype.freeflow_speed_kmh,
                         prototype.geometry, seed, period_ms)
    return model.at(ts_ms)
