"""Per-vehicle state and the one-step evolution model.

The energy models are deliberately simple: electric packs integrate P = IV
against a configured capacity, diesel/hybrid burn at a constant rate
modulated by grade.  The point is plausible, invariant-respecting readings
(odometer monotone, SOC/fuel in [0, 100], SOC rising only while charging),
not vehicle dynamics.

Integration is forward Euler: the reading held at the start of the interval
(current/voltage or fuel rate) is what gets integrated over ``dt``, then the
new reading is computed from the step context.  So a state with 100 A at
600 V drains exactly 60 kJ over one second.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..core import FleetKind, GeoPoint
from .records import TelemetryRecord


class NotInService(RuntimeError):
    """Vehicle has no active trip and is not at the depot — generator bug."""


@dataclass(frozen=True)
class EnergyParams:
    pack_kwh: float = 200.0
    tank_gal: float = 100.0
    # electric discharge: I = base + per_speed*v + per_grade*g, clamped >= 0
    base_current_a: float = 8.0
    current_per_ms: float = 3.5     # amps per m/s
    current_per_grade: float = 2.2  # amps per % grade
    charge_current_a: float = -300.0
    charge_below_pct: float = 95.0
    # combustion: rate = base * (1 + grade_gain*g) while moving, idle when not
    diesel_base_gph: float = 4.0
    hybrid_base_gph: float = 1.8
    grade_gain: float = 0.05
    idle_gph: float = 0.8
    refuel_below_pct: float = 20.0


@dataclass(frozen=True)
class VehicleState:
    vehicle_id: str
    fleet: FleetKind
    position: GeoPoint
    odometer_m: float
    fuel_level_pct: float | None = None
    fuel_rate_gph: float | None = None
    soc_pct: float | None = None
    battery_current_a: float | None = None
    battery_voltage_v: float | None = None
    charging: bool | None = None
    trip_id: str | None = None
    route_id: str | None = None
    driver_id: str | None = None

    def __post_init__(self) -> None:
        electric = self.fleet is FleetKind.ELECTRIC
        fuel_fields = (self.fuel_level_pct, self.fuel_rate_gph)
        batt_fields = (self.soc_pct, self.battery_current_a,
                       self.battery_voltage_v, self.charging)
        if electric:
            if any(f is not None for f in fuel_fields) or any(f is None for f in batt_fields):
                raise ValueError("electric state must populate exactly soc/current/voltage/charging")
            if not 0.0 <= self.soc_pct <= 100.0:
                raise ValueError(f"soc_pct {self.soc_pct} outside [0, 100]")
            if self.battery_voltage_v <= 0:
                raise ValueError("battery_voltage_v must be positive")
        else:
            if any(f is not None for f in batt_fields) or any(f is None for f in fuel_fields):
                raise ValueError("combustion state must populate exactly fuel level/rate")
            if not 0.0 <= self.fuel_level_pct <= 100.0:
                raise ValueError(f"fuel_level_pct {self.fuel_level_pct} outside [0, 100]")
            if self.fuel_rate_gph < 0:
                raise ValueError("fuel_rate_gph must be non-negative")
        if self.odometer_m < 0:
            raise ValueError("odometer_m must be non-negative")


def initial_state(vehicle_id: str, fleet: FleetKind, position: GeoPoint,
                  soc_pct: float = 90.0, fuel_level_pct: float = 90.0) -> VehicleState:
    if fleet is FleetKind.ELECTRIC:
        return VehicleState(vehicle_id, fleet, position, 0.0, soc_pct=soc_pct,
                            battery_current_a=0.0,
                            battery_voltage_v=585.0 + 0.4 * soc_pct, charging=False)
    return VehicleState(vehicle_id, fleet, position, 0.0,
                        fuel_level_pct=fuel_level_pct, fuel_rate_gph=0.0)


@dataclass(frozen=True)
class StepContext:
    """What happened to the vehicle over one step, decided by the motion plan."""
    ts_ms: int                # timestamp of the emitted record (end of step)
    new_position: GeoPoint
    move_m: float             # path distance covered during the step
    grade_pct: float = 0.0
    trip_id: str | None = None
    route_id: str | None = None
    driver_id: str | None = None
    at_depot: bool = False


def _round_gps(p: GeoPoint) -> list[float]:
    return [round(p.lat, 6), round(p.lon, 6)]


def step_vehicle(state: VehicleState, dt_ms: int, ctx: StepContext,
                 params: EnergyParams = EnergyParams()) -> tuple[VehicleState, TelemetryRecord]:
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    if ctx.trip_id is None and not ctx.at_depot:
        raise NotInService(f"{state.vehicle_id} has no trip and is away from the depot")

    dt_s = dt_ms / 1000.0
    speed_ms = ctx.move_m / dt_s
    odometer = state.odometer_m + ctx.move_m

    if state.fleet is FleetKind.ELECTRIC:
        drawn_kwh = state.battery_current_a * state.battery_voltage_v * dt_s / 3.6e6
        soc = min(100.0, max(0.0, state.soc_pct - drawn_kwh / params.pack_kwh * 100.0))
        if ctx.trip_id is not None:
            charging = False
            current = max(0.0, params.base_current_a
                          + params.current_per_ms * speed_ms
                          + params.current_per_grade * ctx.grade_pct)
        else:
            charging = soc < params.charge_below_pct
            current = params.charge_current_a if charging else 0.0
        new = replace(state, position=ctx.new_position, odometer_m=odometer,
                      soc_pct=soc, battery_current_a=current,
                      battery_voltage_v=585.0 + 0.4 * soc, charging=charging,
                      trip_id=ctx.trip_id, route_id=ctx.route_id, driver_id=ctx.driver_id)
        labels = {
            "gps": _round_gps(ctx.new_position),
            "odometer_m": round(odometer, 2),
            "soc_pct": round(soc, 4),
            "battery_current_a": round(current, 2),
            "battery_voltage_v": round(new.battery_voltage_v, 2),
            "charging": charging,
        }
    else:
        burned_gal = state.fuel_rate_gph * dt_s / 3600.0
        fuel = max(0.0, state.fuel_level_pct - burned_gal / params.tank_gal * 100.0)
        if ctx.trip_id is not None:
            base = (params.diesel_base_gph if state.fleet is FleetKind.DIESEL
                    else params.hybrid_base_gph)
            if ctx.move_m > 0:
                rate = base * max(0.2, 1.0 + params.grade_gain * ctx.grade_pct)
            else:
                rate = params.idle_gph
        else:
            rate = 0.0  # engine off at the depot
            if fuel < params.refuel_below_pct:
                fuel = 100.0
        new = replace(state, position=ctx.new_position, odometer_m=odometer,
                      fuel_level_pct=fuel, fuel_rate_gph=rate,
                      trip_id=ctx.trip_id, route_id=ctx.route_id, driver_id=ctx.driver_id)
        labels = {
            "gps": _round_gps(ctx.new_position),
            "odometer_m": round(odometer, 2),
            "fuel_level_pct": round(fuel, 4),
            "fuel_rate_gph": round(rate, 3),
        }
        if ctx.trip_id is not None:
            labels["trip_id"] = ctx.trip_id
            labels["driver_id"] = ctx.driver_id

    record = TelemetryRecord(state.vehicle_id, ctx.ts_ms, state.fleet, labels)
    return new, record
