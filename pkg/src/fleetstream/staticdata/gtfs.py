"""GTFS subset loader: routes, trips, stops, stop_times, calendar.

Only the fields the pipeline needs are read; unknown columns are ignored.
An optional ``vehicle_id`` column on trips carries the vehicle binding used
by the coverage monitor (real feeds usually lack it; scenarios provide it).
"""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass
from pathlib import Path

from ..core import GeoPoint

_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})$")

REQUIRED_FILES = ("routes.txt", "trips.txt", "stops.txt", "stop_times.txt")


class MissingFile(FileNotFoundError):
    pass


class MalformedCsv(ValueError):
    """Bad row content; message carries file and line number."""


class DanglingReference(ValueError):
    """A row references an entity id that does not exist."""


@dataclass(frozen=True)
class Route:
    route_id: str
    name: str


@dataclass(frozen=True)
class Trip:
    trip_id: str
    route_id: str
    service_id: str
    vehicle_id: str | None = None


@dataclass(frozen=True)
class Stop:
    stop_id: str
    position: GeoPoint


@dataclass(frozen=True)
class StopTime:
    trip_id: str
    stop_id: str
    arrival_s: int
    departure_s: int
    sequence: int


@dataclass(frozen=True)
class ServicePattern:
    """calendar.txt row: weekday mask (0=Monday) plus a date range."""

    service_id: str
    weekdays: frozenset[int]
    start_date: dt.date
    end_date: dt.date

    def runs_on(self, date: dt.date) -> bool:
        return self.start_date <= date <= self.end_date and date.weekday() in self.weekdays


@dataclass(frozen=True)
class ActiveTrip:
    trip_id: str
    route_id: str
    start_s: int
    end_s: int
    vehicle_id: str | None


@dataclass
class GtfsSchedule:
    routes: dict[str, Route]
    trips: dict[str, Trip]
    stops: dict[str, Stop]
    stop_times: dict[str, list[StopTime]]  # per trip, in sequence order
    services: dict[str, ServicePattern]  # empty means every service runs daily


def parse_gtfs_time(text: str, where: str) -> int:
    m = _TIME_RE.match(text.strip())
    if not m:
        raise MalformedCsv(f"{where}: bad time {text!r}")
    h, mi, s = (int(g) for g in m.groups())
    if mi > 59 or s > 59:
        raise MalformedCsv(f"{where}: bad time {text!r}")
    return h * 3600 + mi * 60 + s  # hours may exceed 23 for past-midnight trips


def _read_rows(path: Path) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as f:
            return list(csv.DictReader(f))
    except csv.Error as e:
        raise MalformedCsv(f"{path.name}: {e}") from e


def _field(row: dict, name: str, path: Path, line: int) -> str:
    value = (row.get(name) or "").strip()
    if not value:
        raise MalformedCsv(f"{path.name} line {line}: missing {name}")
    return value


def load_gtfs(path: str | Path) -> GtfsSchedule:
    """Parse and cross-validate the GTFS subset under ``path``."""
    root = Path(path)
    for fname in REQUIRED_FILES:
        if not (root / fname).exists():
            raise MissingFile(str(root / fname))

    routes: dict[str, Route] = {}
    for i, row in enumerate(_read_rows(root / "routes.txt"), start=2):
        rid = _field(row, "route_id", root / "routes.txt", i)
        name = (row.get("name") or row.get("route_short_name")
                or row.get("route_long_name") or rid).strip()
        routes[rid] = Route(rid, name)

    trips: dict[str, Trip] = {}
    dangling: list[str] = []
    for i, row in enumerate(_read_rows(root / "trips.txt"), start=2):
        tid = _field(row, "trip_id", root / "trips.txt", i)
        rid = _field(row, "route_id", root / "trips.txt", i)
        if rid not in routes:
            dangling.append(f"trips.txt line {i}: route_id {rid!r}")
        vehicle = (row.get("vehicle_id") or "").strip() or None
        trips[tid] = Trip(tid, rid, (row.get("service_id") or "").strip(), vehicle)

    stops: dict[str, Stop] = {}
    stops_path = root / "stops.txt"
    for i, row in enumerate(_read_rows(stops_path), start=2):
        sid = _field(row, "stop_id", stops_path, i)
        try:
            pos = GeoPoint(float(_field(row, "stop_lat", stops_path, i)),
                           float(_field(row, "stop_lon", stops_path, i)))
        except ValueError as e:
            raise MalformedCsv(f"stops.txt line {i}: {e}") from e
        stops[sid] = Stop(sid, pos)

    st_path = root / "stop_times.txt"
    stop_times: dict[str, list[StopTime]] = {}
    for i, row in enumerate(_read_rows(st_path), start=2):
        tid = _field(row, "trip_id", st_path, i)
        sid = _field(row, "stop_id", st_path, i)
        if tid not in trips:
            dangling.append(f"stop_times.txt line {i}: trip_id {tid!r}")
        if sid not in stops:
            dangling.append(f"stop_times.txt line {i}: stop_id {sid!r}")
        where = f"stop_times.txt line {i}"
        arrival = parse_gtfs_time(_field(row, "arrival_time", st_path, i), where)
        departure_raw = (row.get("departure_time") or "").strip()
        departure = parse_gtfs_time(departure_raw, where) if departure_raw else arrival
        if departure < arrival:
            raise MalformedCsv(f"{where}: departure before arrival")
        try:
            seq = int(_field(row, "stop_sequence", st_path, i))
        except ValueError as e:
            raise MalformedCsv(f"{where}: bad stop_sequence") from e
        stop_times.setdefault(tid, []).append(StopTime(tid, sid, arrival, departure, seq))

    if dangling:
        raise DanglingReference("; ".join(dangling))

    for tid, sts in stop_times.items():
        sts.sort(key=lambda s: s.sequence)
        for a, b in zip(sts, sts[1:]):
            if b.sequence <= a.sequence:
                raise MalformedCsv(f"stop_times.txt: trip {tid!r} repeats sequence {b.sequence}")
            if b.arrival_s < a.departure_s:
                raise MalformedCsv(f"stop_times.txt: trip {tid!r} goes back in time at "
                                   f"sequence {b.sequence}")

    services: dict[str, ServicePattern] = {}
    cal_path = root / "calendar.txt"
    if cal_path.exists():
        days = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
        for i, row in enumerate(_read_rows(cal_path), start=2):
            sid = _field(row, "service_id", cal_path, i)
            weekdays = frozenset(d for d, day in enumerate(days) if (row.get(day) or "").strip() == "1")
            try:
                start = dt.datetime.strptime(_field(row, "start_date", cal_path, i), "%Y%m%d").date()
                end = dt.datetime.strptime(_field(row, "end_date", cal_path, i), "%Y%m%d").date()
            except ValueError as e:
                raise MalformedCsv(f"calendar.txt line {i}: bad date") from e
            services[sid] = ServicePattern(sid, weekdays, start, end)
        unknown = {t.service_id for t in trips.values()} - set(services) - {""}
        if unknown:
            raise DanglingReference(f"trips reference unknown service ids: {sorted(unknown)}")

    return GtfsSchedule(routes, trips, stops, stop_times, services)


def trips_active_at(schedule: GtfsSchedule, date: dt.date) -> list[ActiveTrip]:
    """Trips whose service pattern covers ``date``, with their time window.

    Without a calendar, every trip is considered active daily.  Start and
    end come from the first arrival and last departure.
    """
    out = []
    for trip in schedule.trips.values():
        service = schedule.services.get(trip.service_id)
        if schedule.services and (service is None or not service.runs_on(date)):
            continue
        sts = schedule.stop_times.get(trip.trip_id)
        if not sts:
            continue
        out.append(ActiveTrip(trip.trip_id, trip.route_id,
                              sts[0].arrival_s, sts[-1].departure_s, trip.vehicle_id))
    out.sort(key=lambda t: (t.start_s, t.trip_id))
    return out
