from .gtfs import (
    ActiveTrip,
    DanglingReference,
    GtfsSchedule,
    MalformedCsv,
    MissingFile,
    Route,
    ServicePattern,
    Stop,
    StopTime,
    Trip,
    load_gtfs,
    trips_active_at,
)
from .roadnet import (
    ElevationGrid,
    MalformedInput,
    OutOfGridBounds,
    RoadNetwork,
    RoadNode,
    RoadSegment,
    attach_elevation,
    load_elevation_grid,
    load_road_network,
    polyline_length_m,
)

__all__ = [
    "ActiveTrip",
    "DanglingReference",
    "ElevationGrid",
    "GtfsSchedule",
    "MalformedCsv",
    "MalformedInput",
    "MissingFile",
    "OutOfGridBounds",
    "RoadNetwork",
    "RoadNode",
    "RoadSegment",
    "Route",
    "ServicePattern",
    "Stop",
    "StopTime",
    "Trip",
    "attach_elevation",
    "load_elevation_grid",
    "load_gtfs",
    "load_road_network",
    "polyline_length_m",
    "trips_active_at",
]
