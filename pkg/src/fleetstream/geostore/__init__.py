"""Spatially indexed store over the joined stream, plus energy aggregation."""

from .rtree import InvariantViolation, RTree
from .store import (
    AggregateResult,
    DuplicateSample,
    EnergyIncrement,
    GeoStore,
    IngestReport,
    METERS_PER_MILE,
    StoredSample,
    StoreParams,
    compute_energy_increments,
)

__all__ = [
    "AggregateResult",
    "DuplicateSample",
    "EnergyIncrement",
    "GeoStore",
    "IngestReport",
    "InvariantViolation",
    "METERS_PER_MILE",
    "RTree",
    "StoredSample",
    "StoreParams",
    "compute_energy_increments",
]
