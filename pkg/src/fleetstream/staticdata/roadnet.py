"""Road network graph with per-node elevation, plus the DEM grid sampler.

Input formats (documented external interfaces):

* network: JSON lines, one object per line, either
  ``{"node": {"id": ..., "lat": ..., "lon": ...}}`` or
  ``{"segment": {"id": ..., "nodes": [...], "polyline": [[lat, lon], ...]}}``
* elevation: a single JSON file
  ``{"origin": [lat, lon], "cell_deg": ..., "rows": R, "cols": C,
  "values": [...]}`` with ``values`` row-major, value ``[i][j]`` sampled at
  ``(origin.lat + i*cell_deg, origin.lon + j*cell_deg)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import GeoPoint, haversine_m
from .gtfs import DanglingReference


class MalformedInput(ValueError):
    pass


class OutOfGridBounds(ValueError):
    """Node(s) fall outside the elevation grid; ids listed in the message."""


@dataclass(frozen=True)
class RoadNode:
    node_id: str
    position: GeoPoint
    elevation_m: float | None = None


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    node_ids: tuple[str, ...]
    polyline: tuple[GeoPoint, ...]
    length_m: float
    grade_pct: float = 0.0  # signed, from first node toward last node


@dataclass
class RoadNetwork:
    nodes: dict[str, RoadNode] = field(default_factory=dict)
    segments: list[RoadSegment] = field(default_factory=list)

    def segment_by_id(self, segment_id: str) -> RoadSegment:
        for seg in self.segments:
            if seg.segment_id == segment_id:
                return seg
        raise KeyError(segment_id)


def polyline_length_m(points) -> float:
    return sum(haversine_m(a, b) for a, b in zip(points, points[1:]))


def load_road_network(path: str | Path) -> RoadNetwork:
    net = RoadNetwork()
    raw_segments = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError as e:
                raise MalformedInput(f"{path}:{lineno}: {e}") from e
            if "node" in obj:
                n = obj["node"]
                try:
                    node = RoadNode(str(n["id"]), GeoPoint(float(n["lat"]), float(n["lon"])),
                                    n.get("elevation_m"))
                except (KeyError, TypeError, ValueError) as e:
                    raise MalformedInput(f"{path}:{lineno}: bad node: {e}") from e
                net.nodes[node.node_id] = node
            elif "segment" in obj:
                raw_segments.append((lineno, obj["segment"]))
            else:
                raise MalformedInput(f"{path}:{lineno}: expected 'node' or 'segment'")

    dangling = []
    for lineno, s in raw_segments:
        try:
            seg_id = str(s["id"])
            node_ids = tuple(str(n) for n in s["nodes"])
            polyline = tuple(GeoPoint(float(lat), float(lon)) for lat, lon in s["polyline"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInput(f"{path}:{lineno}: bad segment: {e}") from e
        if len(node_ids) < 2 or len(polyline) < 2:
            raise MalformedInput(f"{path}:{lineno}: segment needs >= 2 nodes and points")
        missing = [n for n in node_ids if n not in net.nodes]
        if missing:
            dangling.extend(f"segment {seg_id!r} -> node {n!r}" for n in missing)
            continue
        net.segments.append(RoadSegment(seg_id, node_ids, polyline, polyline_length_m(polyline)))
    if dangling:
        raise DanglingReference("; ".join(dangling))
    net.segments.sort(key=lambda s: s.segment_id)
    _set_grades(net)
    return net


def _set_grades(net: RoadNetwork) -> None:
    for i, seg in enumerate(net.segments):
        first = net.nodes[seg.node_ids[0]].elevation_m
        last = net.nodes[seg.node_ids[-1]].elevation_m
        if first is None or last is None or seg.length_m == 0:
            continue
        grade = (last - first) / seg.length_m * 100.0
        net.segments[i] = RoadSegment(seg.segment_id, seg.node_ids, seg.polyline,
                                      seg.length_m, grade)


@dataclass
class ElevationGrid:
    origin: GeoPoint
    cell_deg: float
    values: np.ndarray  # rows x cols, value[i][j] at origin + (i, j) * cell_deg

    def __post_init__(self) -> None:
        if self.cell_deg <= 0:
            raise ValueError("cell_deg must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be rectangular, rows x cols")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def contains(self, p: GeoPoint) -> bool:
        i = (p.lat - self.origin.lat) / self.cell_deg
        j = (p.lon - self.origin.lon) / self.cell_deg
        return -1e-9 <= i <= self.rows - 1 + 1e-9 and -1e-9 <= j <= self.cols - 1 + 1e-9

    def sample(self, p: GeoPoint) -> float:
        """Bilinear interpolation over the four surrounding grid values."""
        if not self.contains(p):
            raise OutOfGridBounds(f"({p.lat}, {p.lon}) outside grid")
        i = min(max((p.lat - self.origin.lat) / self.cell_deg, 0.0), self.rows - 1.0)
        j = min(max((p.lon - self.origin.lon) / self.cell_deg, 0.0), self.cols - 1.0)
        i0, j0 = min(int(i), self.rows - 2) if self.rows > 1 else 0, \
            min(int(j), self.cols - 2) if self.cols > 1 else 0
        fi, fj = i - i0, j - j0
        v = self.values
        if self.rows == 1 and self.cols == 1:
            return float(v[0, 0])
        if self.rows == 1:
            return float(v[0, j0] * (1 - fj) + v[0, j0 + 1] * fj)
        if self.cols == 1:
            return float(v[i0, 0] * (1 - fi) + v[i0 + 1, 0] * fi)
        top = v[i0, j0] * (1 - fj) + v[i0, j0 + 1] * fj
        bottom = v[i0 + 1, j0] * (1 - fj) + v[i0 + 1, j0 + 1] * fj
        return float(top * (1 - fi) + bottom * fi)


def load_elevation_grid(path: str | Path) -> ElevationGrid:
    raw = json.loads(Path(path).read_text())
    try:
        origin = GeoPoint(float(raw["origin"][0]), float(raw["origin"][1]))
        rows, cols = int(raw["rows"]), int(raw["cols"])
        values = np.asarray(raw["values"], dtype=float).reshape(rows, cols)
        return ElevationGrid(origin, float(raw["cell_deg"]), values)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedInput(f"{path}: {e}") from e


def attach_elevation(network: RoadNetwork, grid: ElevationGrid) -> RoadNetwork:
    """New network with node elevations sampled from ``grid`` and grades set.

    Pure and idempotent; the input network is left untouched.
    """
    outside = [n.node_id for n in network.nodes.values() if not grid.contains(n.position)]
    if outside:
        raise OutOfGridBounds(f"nodes outside grid: {sorted(outside)}")
    nodes = {
        nid: RoadNode(nid, n.position, grid.sample(n.position))
        for nid, n in network.nodes.items()
    }
    out = RoadNetwork(nodes, list(network.segments))
    _set_grades(out)
    return out
