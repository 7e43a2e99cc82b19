"""Static context for joined samples: GPS -> road segment, elevation, corridor.

Point-to-segment distance uses a local equirectangular projection (exact
enough at city scale, cheap, and — unlike true great-circle-to-arc — easy
to reason about for tie cases).  Nearest-segment search runs on a uniform
cell grid over segment bounding boxes with ring expansion; the expansion
only stops once no unscanned cell could beat the best hit, so the result
is always the exhaustive argmin, ties broken by smaller segment_id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import EARTH_RADIUS_M, GeoPoint
from ..staticdata import GtfsSchedule, RoadNetwork

_DEG_M = math.pi / 180.0 * EARTH_RADIUS_M  # meters per degree of latitude


class EmptyNetwork(ValueError):
    """Nearest-segment lookup against a network with no segments."""


class EnrichmentUnavailable(RuntimeError):
    """No static context; caller should emit the sample unenriched and flag it."""


def point_segment_m(lat: float, lon: float, a: GeoPoint, b: GeoPoint) -> float:
    """Distance from a point to one edge under the local flat projection."""
    ref = math.radians((lat + a.lat + b.lat) / 3.0)
    k = math.cos(ref)
    px, py = lon * k, lat
    ax, ay = a.lon * k, a.lat
    bx, by = b.lon * k, b.lat
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    if ll == 0.0:
        cx, cy = ax, ay
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / ll
        t = max(0.0, min(1.0, t))
        cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy) * math.pi / 180.0 * EARTH_RADIUS_M


def polyline_distance_m(lat: float, lon: float, points: tuple[GeoPoint, ...]) -> float:
    return min(point_segment_m(lat, lon, points[i], points[i + 1])
               for i in range(len(points) - 1))


class SegmentIndex:
    """Uniform-grid index over segment bounding boxes; exact nearest lookup."""

    def __init__(self, network: RoadNetwork, cell_deg: float = 0.005):
        self.cell_deg = cell_deg
        self.segments = {s.segment_id: s.polyline for s in network.segments}
        self._cells: dict[tuple[int, int], list[str]] = {}
        for seg in network.segments:
            lats = [p.lat for p in seg.polyline]
            lons = [p.lon for p in seg.polyline]
            for ci in range(self._cell(min(lats)), self._cell(max(lats)) + 1):
                for cj in range(self._cell(min(lons)), self._cell(max(lons)) + 1):
                    self._cells.setdefault((ci, cj), []).append(seg.segment_id)
        if self._cells:
            self._ci_lo = min(c[0] for c in self._cells)
            self._ci_hi = max(c[0] for c in self._cells)
            self._cj_lo = min(c[1] for c in self._cells)
            self._cj_hi = max(c[1] for c in self._cells)

    def _cell(self, deg: float) -> int:
        return math.floor(deg / self.cell_deg)

    def __len__(self) -> int:
        return len(self.segments)

    def nearest(self, point: GeoPoint) -> tuple[str, float]:
        if not self.segments:
            raise EmptyNetwork("no segments to search")
        ci, cj = self._cell(point.lat), self._cell(point.lon)
        # the per-degree size of a longitude cell shrinks by cos(lat)
        cell_m = self.cell_deg * _DEG_M * min(1.0, abs(math.cos(math.radians(point.lat))))
        best_id: str | None = None
        best_d = math.inf
        seen: set[str] = set()
        ring = 0
        max_ring = 1 + max(abs(self._ci_lo - ci), abs(self._ci_hi - ci),
                           abs(self._cj_lo - cj), abs(self._cj_hi - cj))
        while ring <= max_ring:
            if best_id is not None and (ring - 1) * cell_m > best_d:
                break
            for i, j in self._ring_cells(ci, cj, ring):
                for seg_id in self._cells.get((i, j), ()):
                    if seg_id in seen:
                        continue
                    seen.add(seg_id)
                    d = polyline_distance_m(point.lat, point.lon, self.segments[seg_id])
                    if d < best_d or (d == best_d and seg_id < best_id):
                        best_id, best_d = seg_id, d
            ring += 1
        return best_id, best_d

    @staticmethod
    def _ring_cells(ci: int, cj: int, r: int):
        if r == 0:
            yield ci, cj
            return
        for j in range(cj - r, cj + r + 1):
            yield ci - r, j
            yield ci + r, j
        for i in range(ci - r + 1, ci + r):
            yield i, cj - r
            yield i, cj + r


def nearest_segment(point: GeoPoint, index: SegmentIndex) -> tuple[str, float]:
    """Closest segment to ``point`` and the distance in meters; ties by id."""
    return index.nearest(point)


def _polyline_midpoint(points: tuple[GeoPoint, ...]) -> GeoPoint:
    lens = [math.hypot(points[i + 1].lat - points[i].lat,
                       points[i + 1].lon - points[i].lon)
            for i in range(len(points) - 1)]
    half = sum(lens) / 2.0
    acc = 0.0
    for i, step in enumerate(lens):
        if acc + step >= half and step > 0:
            t = (half - acc) / step
            a, b = points[i], points[i + 1]
            return GeoPoint(a.lat + (b.lat - a.lat) * t, a.lon + (b.lon - a.lon) * t)
        acc += step
    return points[-1]


@dataclass
class _Context:
    index: SegmentIndex
    elevations: dict[str, tuple[tuple[GeoPoint, float], tuple[GeoPoint, float]]]
    grades: dict[str, float]
    segment_tmc: dict[str, str]
    trip_routes: dict[str, str]


class Enricher:
    """Precomputed lookups from static data, shared across window closes."""

    def __init__(self, network: RoadNetwork | None,
                 schedule: GtfsSchedule | None = None,
                 tmc_geometries: dict[str, tuple[GeoPoint, ...]] | None = None,
                 cell_deg: float = 0.005):
        if network is None or not network.segments:
            self._ctx = None
            return
        index = SegmentIndex(network, cell_deg)
        elevations = {}
        grades = {}
        for seg in network.segments:
            first = network.nodes[seg.node_ids[0]]
            last = network.nodes[seg.node_ids[-1]]
            elevations[seg.segment_id] = ((first.position, first.elevation_m),
                                          (last.position, last.elevation_m))
            grades[seg.segment_id] = seg.grade_pct
        segment_tmc: dict[str, str] = {}
        if tmc_geometries:
            for seg in network.segments:
                mid = _polyline_midpoint(seg.polyline)
                best_id, best_d = None, math.inf
                for tmc_id in sorted(tmc_geometries):
                    d = polyline_distance_m(mid.lat, mid.lon, tmc_geometries[tmc_id])
                    if d < best_d:
                        best_id, best_d = tmc_id, d
                segment_tmc[seg.segment_id] = best_id
        trip_routes = {}
        if schedule is not None:
            trip_routes = {t.trip_id: t.route_id for t in schedule.trips.values()}
        self._ctx = _Context(index, elevations, grades, segment_tmc, trip_routes)
        self._nearest_memo: dict[tuple[float, float], tuple[str, float]] = {}

    @property
    def available(self) -> bool:
        return self._ctx is not None

    def nearest(self, lat: float, lon: float) -> tuple[str, float]:
        if self._ctx is None:
            raise EnrichmentUnavailable("no road network loaded")
        hit = self._nearest_memo.get((lat, lon))
        if hit is None:
            hit = self._ctx.index.nearest(GeoPoint(lat, lon))
            self._nearest_memo[(lat, lon)] = hit
        return hit

    def enrich(self, sample, window_traffic: dict[str, dict] | None) -> None:
        """Fill static fields of a JoinedSample in place.

        Raises EnrichmentUnavailable when no network is loaded; the engine
        turns that into a flagged, unenriched sample.
        """
        if self._ctx is None:
            raise EnrichmentUnavailable("no road network loaded")
        ctx = self._ctx
        lat, lon = sample.position
        seg_id, dist = self.nearest(lat, lon)
        sample.osm_segment_id = seg_id
        sample.segment_distance_m = round(dist, 3)
        (a_pos, a_elev), (b_pos, b_elev) = ctx.elevations[seg_id]
        da = point_segment_m(lat, lon, a_pos, a_pos)
        db = point_segment_m(lat, lon, b_pos, b_pos)
        elev = a_elev if da <= db else b_elev
        sample.elevation_m = None if elev is None else round(elev, 2)
        sample.grade_pct = round(ctx.grades[seg_id], 4)

        tmc_id = ctx.segment_tmc.get(seg_id)
        if tmc_id is not None and window_traffic and tmc_id in window_traffic:
            rec = window_traffic[tmc_id]
            sample.tmc_id = tmc_id
            sample.current_speed_kmh = rec["current_speed_kmh"]
            sample.jam_factor = rec["jam_factor"]

        if sample.trip_id is not None and sample.trip_id in ctx.trip_routes:
            scheduled = ctx.trip_routes[sample.trip_id]
            if sample.route_id is None:
                sample.route_id = scheduled
            elif sample.route_id != scheduled:
                sample.flags["route_mismatch"] = True
