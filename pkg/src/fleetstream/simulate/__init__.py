from .records import (
    OccupancyRecord,
    SchemaError,
    TelemetryRecord,
    TrafficRecord,
    TripContextRecord,
    WeatherRecord,
)
from .scenario import ConfigError, FaultWindow, ScenarioConfig, SimulationReport, run_simulation
from .vehicle import EnergyParams, NotInService, StepContext, VehicleState, step_vehicle
from .weather import WeatherModel, gen_weather
from .traffic import TrafficModel, current_speed_for, gen_traffic, jam_factor_for
from .worldgen import World, WorldParams, build_world, write_world

__all__ = [
    "ConfigError",
    "EnergyParams",
    "FaultWindow",
    "NotInService",
    "OccupancyRecord",
    "ScenarioConfig",
    "SchemaError",
    "SimulationReport",
    "StepContext",
    "TelemetryRecord",
    "TrafficModel",
    "TrafficRecord",
    "TripContextRecord",
    "VehicleState",
    "WeatherModel",
    "WeatherRecord",
    "World",
    "WorldParams",
    "build_world",
    "current_speed_for",
    "gen_traffic",
    "gen_weather",
    "jam_factor_for",
    "run_simulation",
    "step_vehicle",
    "write_world",
]
