"""Deterministic synthetic service area: road grid, elevation, schedule, corridors.

The generated world is a jittered lattice of road nodes around downtown
Chattanooga, a smooth synthetic elevation surface, a handful of rectangular
loop routes with stops on every second loop node, per-vehicle trip chains
running 06:00-22:00, and one traffic corridor per grid row.  Everything is
a pure function of :class:`WorldParams`, so two builds with the same params
are identical, and a world written to disk loads back equal.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import GeoPoint
from ..staticdata import (
    ElevationGrid,
    GtfsSchedule,
    RoadNetwork,
    RoadNode,
    RoadSegment,
    Route,
    ServicePattern,
    Stop,
    StopTime,
    Trip,
    attach_elevation,
    load_elevation_grid,
    load_gtfs,
    load_road_network,
    polyline_length_m,
)
from .records import TrafficRecord
from .rng import unit_hash

import datetime as dt


@dataclass(frozen=True)
class WorldParams:
    seed: int = 7
    center: GeoPoint = GeoPoint(35.0456, -85.3097)
    grid_n: int = 6                 # grid_n x grid_n road nodes
    spacing_deg: float = 0.006
    dem_cell_deg: float = 0.002
    n_routes: int = 4
    vehicle_ids: tuple[str, ...] = tuple(f"bus-{i:03d}" for i in range(60))
    cruise_ms: float = 10.0
    dwell_s: int = 20
    service_start_s: int = 6 * 3600
    service_end_s: int = 22 * 3600
    stagger_s: int = 180            # headway between vehicles sharing a route
    station_id: str = "station-1"

    def __post_init__(self) -> None:
        if self.grid_n < 4:
            raise ValueError("grid_n must be at least 4 to fit loop routes")
        if self.n_routes < 1 or not self.vehicle_ids:
            raise ValueError("need at least one route and one vehicle")


@dataclass(frozen=True)
class PathGeometry:
    """A closed loop over road nodes with per-leg lengths, grades, segment ids."""

    node_ids: tuple[str, ...]       # first == last
    points: tuple[GeoPoint, ...]
    seg_ids: tuple[str, ...]        # one per leg
    grades: tuple[float, ...]       # signed along travel direction, one per leg
    leg_len_m: tuple[float, ...]
    cum_m: tuple[float, ...]        # cumulative distance at each node, cum_m[0] == 0

    @property
    def total_m(self) -> float:
        return self.cum_m[-1]

    def locate(self, d_m: float) -> tuple[GeoPoint, float, str]:
        """Position, grade and road segment id at path distance ``d_m``."""
        d = min(max(d_m, 0.0), self.total_m)
        leg = min(bisect_right(self.cum_m, d) - 1, len(self.seg_ids) - 1)
        span = self.leg_len_m[leg]
        frac = (d - self.cum_m[leg]) / span if span > 0 else 0.0
        a, b = self.points[leg], self.points[leg + 1]
        pos = GeoPoint(a.lat + (b.lat - a.lat) * frac, a.lon + (b.lon - a.lon) * frac)
        return pos, self.grades[leg], self.seg_ids[leg]


@dataclass
class World:
    params: WorldParams
    network: RoadNetwork
    grid: ElevationGrid
    schedule: GtfsSchedule
    tmc_prototypes: list[TrafficRecord]
    paths: dict[str, PathGeometry] = field(default_factory=dict)   # route_id -> loop
    vehicle_routes: dict[str, str] = field(default_factory=dict)   # vehicle_id -> route_id

    @property
    def station_id(self) -> str:
        return self.params.station_id

    def depot_of(self, vehicle_id: str) -> GeoPoint:
        """A vehicle parks at its route's loop start, so trips never teleport it."""
        return self.paths[self.vehicle_routes[vehicle_id]].points[0]


def _node_id(r: int, c: int) -> str:
    return f"n{r:02d}{c:02d}"


def _build_network(p: WorldParams) -> RoadNetwork:
    n = p.grid_n
    half = (n - 1) / 2.0
    nodes: dict[str, RoadNode] = {}
    for r in range(n):
        for c in range(n):
            jlat = (unit_hash(p.seed, "nlat", r, c) - 0.5) * p.spacing_deg * 0.12
            jlon = (unit_hash(p.seed, "nlon", r, c) - 0.5) * p.spacing_deg * 0.12
            pos = GeoPoint(p.center.lat + (r - half) * p.spacing_deg + jlat,
                           p.center.lon + (c - half) * p.spacing_deg + jlon)
            nodes[_node_id(r, c)] = RoadNode(_node_id(r, c), pos)

    segments: list[RoadSegment] = []
    for r in range(n):
        for c in range(n):
            if c + 1 < n:
                a, b = _node_id(r, c), _node_id(r, c + 1)
                poly = (nodes[a].position, nodes[b].position)
                segments.append(RoadSegment(f"sh-{r:02d}{c:02d}", (a, b), poly,
                                            polyline_length_m(poly)))
            if r + 1 < n:
                a, b = _node_id(r, c), _node_id(r + 1, c)
                poly = (nodes[a].position, nodes[b].position)
                segments.append(RoadSegment(f"sv-{r:02d}{c:02d}", (a, b), poly,
                                            polyline_length_m(poly)))
    segments.sort(key=lambda s: s.segment_id)
    return RoadNetwork(nodes, segments)


def _build_grid(p: WorldParams, network: RoadNetwork) -> ElevationGrid:
    lats = [n.position.lat for n in network.nodes.values()]
    lons = [n.position.lon for n in network.nodes.values()]
    margin = p.spacing_deg
    origin = GeoPoint(min(lats) - margin, min(lons) - margin)
    rows = int(math.ceil((max(lats) + margin - origin.lat) / p.dem_cell_deg)) + 1
    cols = int(math.ceil((max(lons) + margin - origin.lon) / p.dem_cell_deg)) + 1
    values = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            y = (origin.lat + i * p.dem_cell_deg - p.center.lat) / 0.01
            x = (origin.lon + j * p.dem_cell_deg - p.center.lon) / 0.01
            values[i, j] = 200.0 + 40.0 * math.sin(1.1 * y) + 25.0 * math.cos(0.7 * x)
    return ElevationGrid(origin, p.dem_cell_deg, values)


def _loop_nodes(p: WorldParams, k: int) -> list[str]:
    """Perimeter of a rectangle on the node lattice, closed (first == last)."""
    n = p.grid_n
    r0 = k % (n - 3)
    c0 = (2 * k) % (n - 3)
    r1 = min(n - 1, r0 + 2 + k % 2)
    c1 = min(n - 1, c0 + 2 + (k + 1) % 2)
    seq = [(r0, c) for c in range(c0, c1)]
    seq += [(r, c1) for r in range(r0, r1)]
    seq += [(r1, c) for c in range(c1, c0, -1)]
    seq += [(r, c0) for r in range(r1, r0, -1)]
    seq.append((r0, c0))
    return [_node_id(r, c) for r, c in seq]


def path_from_nodes(network: RoadNetwork, node_ids: list[str]) -> PathGeometry:
    """Stitch a path over existing segments; grades follow travel direction."""
    edges: dict[tuple[str, str], tuple[str, float]] = {}
    for seg in network.segments:
        a, b = seg.node_ids[0], seg.node_ids[-1]
        edges[(a, b)] = (seg.segment_id, seg.grade_pct)
        edges[(b, a)] = (seg.segment_id, -seg.grade_pct)

    points = tuple(network.nodes[nid].position for nid in node_ids)
    seg_ids, grades, lens, cum = [], [], [], [0.0]
    for a, b in zip(node_ids, node_ids[1:]):
        if (a, b) not in edges:
            raise KeyError(f"no road segment between {a!r} and {b!r}")
        sid, grade = edges[(a, b)]
        seg_ids.append(sid)
        grades.append(grade)
        length = polyline_length_m((network.nodes[a].position, network.nodes[b].position))
        lens.append(length)
        cum.append(cum[-1] + length)
    return PathGeometry(tuple(node_ids), points, tuple(seg_ids), tuple(grades),
                        tuple(lens), tuple(cum))


def _leg_seconds(path: PathGeometry, cruise_ms: float) -> list[int]:
    return [max(1, round(length / cruise_ms)) for length in path.leg_len_m]


def _build_schedule(p: WorldParams, paths: dict[str, PathGeometry],
                    network: RoadNetwork) -> tuple[GtfsSchedule, dict[str, str]]:
    routes = {rid: Route(rid, f"Loop {rid[-2:]}") for rid in paths}
    stops: dict[str, Stop] = {}
    trips: dict[str, Trip] = {}
    stop_times: dict[str, list[StopTime]] = {}
    vehicle_routes: dict[str, str] = {}
    route_ids = sorted(paths)

    for vi, vehicle_id in enumerate(p.vehicle_ids):
        rid = route_ids[vi % len(route_ids)]
        vehicle_routes[vehicle_id] = rid
        path = paths[rid]
        legs_s = _leg_seconds(path, p.cruise_ms)
        stop_idx = list(range(0, len(path.node_ids), 2))
        if stop_idx[-1] != len(path.node_ids) - 1:
            stop_idx.append(len(path.node_ids) - 1)
        for idx in stop_idx:
            nid = path.node_ids[idx]
            stops.setdefault(f"st-{nid}", Stop(f"st-{nid}", network.nodes[nid].position))

        start = p.service_start_s + (vi // len(route_ids)) * p.stagger_s
        ti = 0
        while True:
            rows: list[StopTime] = []
            t = start
            prev_idx = 0
            trip_id = f"t-{vehicle_id}-{ti:03d}"
            for seq, idx in enumerate(stop_idx, start=1):
                t += sum(legs_s[prev_idx:idx])
                arrival = t
                last = idx == stop_idx[-1]
                departure = arrival if (seq == 1 or last) else arrival + p.dwell_s
                rows.append(StopTime(trip_id, f"st-{path.node_ids[idx]}",
                                     arrival, departure, seq))
                t = departure
                prev_idx = idx
            if rows[-1].departure_s > p.service_end_s:
                break
            trips[trip_id] = Trip(trip_id, rid, "daily", vehicle_id)
            stop_times[trip_id] = rows
            start = rows[-1].departure_s
            ti += 1

    services = {"daily": ServicePattern("daily", frozenset(range(7)),
                                        dt.date(2025, 1, 1), dt.date(2027, 12, 31))}
    return GtfsSchedule(routes, trips, stops, stop_times, services), vehicle_routes


def _build_tmcs(p: WorldParams, network: RoadNetwork) -> list[TrafficRecord]:
    out = []
    for r in range(p.grid_n):
        geometry = tuple(network.nodes[_node_id(r, c)].position for c in range(p.grid_n))
        freeflow = 40.0 + 25.0 * unit_hash(p.seed, "freeflow", r)
        out.append(TrafficRecord(f"tmc-row-{r:02d}", 0, freeflow, freeflow,
                                 0.0, 1.0, geometry))
    return out


def build_world(params: WorldParams = WorldParams()) -> World:
    bare = _build_network(params)
    grid = _build_grid(params, bare)
    network = attach_elevation(bare, grid)
    paths = {f"r{k:02d}": path_from_nodes(network, _loop_nodes(params, k))
             for k in range(params.n_routes)}
    schedule, vehicle_routes = _build_schedule(params, paths, network)
    tmcs = _build_tmcs(params, network)
    return World(params, network, grid, schedule, tmcs, paths, vehicle_routes)


# --- on-disk form -----------------------------------------------------------

def write_world(world: World, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)

    with open(root / "network.jsonl", "w", encoding="utf-8") as f:
        for nid in sorted(world.network.nodes):
            node = world.network.nodes[nid]
            f.write(json.dumps({"node": {"id": nid, "lat": node.position.lat,
                                         "lon": node.position.lon}}) + "\n")
        for seg in world.network.segments:
            f.write(json.dumps({"segment": {
                "id": seg.segment_id,
                "nodes": list(seg.node_ids),
                "polyline": [[pt.lat, pt.lon] for pt in seg.polyline],
            }}) + "\n")

    grid = world.grid
    (root / "dem.json").write_text(json.dumps({
        "origin": [grid.origin.lat, grid.origin.lon],
        "cell_deg": grid.cell_deg,
        "rows": grid.rows,
        "cols": grid.cols,
        "values": grid.values.tolist(),
    }))

    gtfs = root / "gtfs"
    gtfs.mkdir(exist_ok=True)
    sched = world.schedule

    def _csv(name: str, header: list[str], rows: list[list]) -> None:
        with open(gtfs / name, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)

    _csv("routes.txt", ["route_id", "route_short_name"],
         [[r.route_id, r.name] for r in sorted(sched.routes.values(), key=lambda r: r.route_id)])
    _csv("trips.txt", ["trip_id", "route_id", "service_id", "vehicle_id"],
         [[t.trip_id, t.route_id, t.service_id, t.vehicle_id or ""]
          for t in sorted(sched.trips.values(), key=lambda t: t.trip_id)])
    _csv("stops.txt", ["stop_id", "stop_lat", "stop_lon"],
         [[s.stop_id, repr(s.position.lat), repr(s.position.lon)]
          for s in sorted(sched.stops.values(), key=lambda s: s.stop_id)])

    def _hms(seconds: int) -> str:
        return f"{seconds // 3600}:{seconds // 60 % 60:02d}:{seconds % 60:02d}"

    st_rows = []
    for tid in sorted(sched.stop_times):
        st_rows += [[st.trip_id, st.stop_id, _hms(st.arrival_s), _hms(st.departure_s),
                     st.sequence] for st in sched.stop_times[tid]]
    _csv("stop_times.txt", ["trip_id", "stop_id", "arrival_time", "departure_time",
                            "stop_sequence"], st_rows)

    with open(gtfs / "calendar.txt", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        days = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
        w.writerow(["service_id", *days, "start_date", "end_date"])
        for sid in sorted(sched.services):
            svc = sched.services[sid]
            w.writerow([sid, *[1 if d in svc.weekdays else 0 for d in range(7)],
                        svc.start_date.strftime("%Y%m%d"), svc.end_date.strftime("%Y%m%d")])

    (root / "tmc.json").write_text(json.dumps([{
        "tmc_id": t.tmc_id,
        "freeflow_speed_kmh": t.freeflow_speed_kmh,
        "geometry": [[pt.lat, pt.lon] for pt in t.geometry],
    } for t in world.tmc_prototypes]))

    (root / "world.json").write_text(json.dumps({
        "seed": world.params.seed,
        "station_id": world.params.station_id,
        "vehicle_ids": list(world.params.vehicle_ids),
        "loops": {rid: list(path.node_ids) for rid, path in sorted(world.paths.items())},
        "vehicle_routes": world.vehicle_routes,
    }, sort_keys=True))


def load_tmc_prototypes(path: str | Path) -> list[TrafficRecord]:
    raw = json.loads(Path(path).read_text())
    return [TrafficRecord(t["tmc_id"], 0, t["freeflow_speed_kmh"], t["freeflow_speed_kmh"],
                          0.0, 1.0, tuple(GeoPoint(lat, lon) for lat, lon in t["geometry"]))
            for t in raw]


def load_world(directory: str | Path, params: WorldParams | None = None) -> World:
    root = Path(directory)
    network = attach_elevation(load_road_network(root / "network.jsonl"),
                               load_elevation_grid(root / "dem.json"))
    grid = load_elevation_grid(root / "dem.json")
    schedule = load_gtfs(root / "gtfs")
    tmcs = load_tmc_prototypes(root / "tmc.json")
    meta = json.loads((root / "world.json").read_text())
    if params is None:
        params = WorldParams(seed=meta["seed"], vehicle_ids=tuple(meta["vehicle_ids"]),
                             station_id=meta["station_id"])
    paths = {rid: path_from_nodes(network, nodes) for rid, nodes in meta["loops"].items()}
    return World(params, network, grid, schedule, tmcs, paths, meta["vehicle_routes"])
