"""Synthetic weather-station observations.

Fields follow a diurnal sinusoid plus a smoothed counter-based noise term.
The noise for sample index k averages four hash draws (k-3..k), so two
consecutive samples share three of the four draws and the temperature step
between 5-minute readings stays well under 1.5 degC.  Everything is a pure
function of (seed, station, sample index): a record can be regenerated from
its timestamp alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .records import WeatherRecord
from .rng import unit_hash

DEFAULT_PERIOD_MS = 300_000

MS_PER_DAY = 86_400_000


def _smooth(seed: int, station_id: str, field: str, k: int) -> float:
    """Mean of four consecutive hash draws; in [0, 1), step <= 0.25."""
    draws = (unit_hash(seed, station_id, field, k - i) for i in range(4))
    return sum(draws) / 4.0


@dataclass(frozen=True)
class WeatherModel:
    station_id: str
    seed: int
    period_ms: int = DEFAULT_PERIOD_MS

    def at(self, ts_ms: int) -> WeatherRecord:
        k = ts_ms // self.period_ms
        hour = (ts_ms % MS_PER_DAY) / 3_600_000.0
        s = self.seed
        sid = self.station_id

        diurnal = 6.0 * math.sin(2.0 * math.pi * (hour - 9.0) / 24.0)
        temp = 15.0 + diurnal + (_smooth(s, sid, "temp", k) - 0.5) * 4.0

        wind = 6.0 * _smooth(s, sid, "wind", k)
        wind_dir = 360.0 * _smooth(s, sid, "winddir", k)  # strictly < 360
        rain = max(0.0, (_smooth(s, sid, "rain", k) - 0.8)) * 25.0
        humidity = min(100.0, max(0.0, 65.0 + (_smooth(s, sid, "hum", k) - 0.5) * 50.0))
        visibility = max(0.1, 16.0 - 2.0 * rain - 4.0 * _smooth(s, sid, "vis", k))
        pressure = 1013.0 + (_smooth(s, sid, "pres", k) - 0.5) * 24.0

        return WeatherRecord(
            station_id=sid,
            ts_ms=ts_ms,
            temperature_c=temp,
            wind_speed_ms=wind,
            wind_direction_deg=wind_dir,
            precipitation_mmh=rain,
            humidity_pct=humidity,
            visibility_km=visibility,
            pressure_hpa=pressure,
        )


def gen_weather(station_id: str, ts_ms: int, seed: int,
                period_ms: int = DEFAULT_PERIOD_MS) -> WeatherRecord:
    """One observation; identical (station, ts, seed) always yields the same record."""
    return WeatherModel(station_id, seed, period_ms).at(ts_ms)
