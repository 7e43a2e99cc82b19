"""Read-only query API plus broker wire endpoints, as one FastAPI app.

The ``/api/v1/*`` routes are unauthenticated and read-only; they serve the
dashboard.  Producers and external consumers use ``/v1/topics/...`` with
their tenant secret as a bearer token.  Response bodies follow the schemas
in :mod:`.schemas`.

Handlers are plain functions over (store, broker, query) so the command
line can call them without HTTP; the FastAPI layer only parses parameters,
maps errors to status codes, and pins headers
(``application/json; charset=utf-8``, permissive CORS).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..broker import (
    AuthFailed,
    Broker,
    Capability,
    Forbidden,
    OffsetOutOfRange,
    UnknownTopic,
)
from ..core import (
    FleetKind,
    MalformedTopic,
    TopicName,
    canonical_json,
    parse_payload,
    parse_topic_name,
)
from ..geostore import GeoStore
from ..staticdata.roadnet import RoadNetwork

UNITS = "kWh/mile"
GROUP_KEYS = ("route", "fleet", "segment")
FLEET_NAMES = tuple(k.value for k in FleetKind)

MAX_PAGE = 1000
DEFAULT_PAGE = 100


class QueryError(ValueError):
    """Carries field-level messages destined for a 400 body."""

    def __init__(self, errors: list[dict]):
        super().__init__("; ".join(e["message"] for e in errors))
        self.errors = errors


def _bad(field: str | None, message: str) -> dict:
    return {"field": field, "message": message}


@dataclass
class ApiQuery:
    from_ms: int
    to_ms: int
    group_by: str
    fleet: str | None = None
    route_id: str | None = None
    bbox: tuple[float, float, float, float] | None = None

    def echo(self) -> dict:
        return {
            "from_ms": self.from_ms,
            "to_ms": self.to_ms,
            "group_by": self.group_by,
            "fleet": self.fleet,
            "route_id": self.route_id,
            "bbox": list(self.bbox) if self.bbox is not None else None,
        }


def _parse_int(params, name, errors, *, required=True, default=None):
    raw = params.get(name)
    if raw is None:
        if required:
            errors.append(_bad(name, "required"))
        return default
    try:
        return int(raw)
    except ValueError:
        errors.append(_bad(name, f"not an integer: {raw!r}"))
        return default


def _parse_range(params, errors) -> tuple[int | None, int | None]:
    from_ms = _parse_int(params, "from_ms", errors)
    to_ms = _parse_int(params, "to_ms", errors)
    if from_ms is not None and to_ms is not None and from_ms > to_ms:
        errors.append(_bad("from_ms", "must be <= to_ms"))
    return from_ms, to_ms


def _parse_filters(params, errors) -> tuple[str | None, str | None]:
    fleet = params.get("fleet")
    if fleet is not None and fleet not in FLEET_NAMES:
        errors.append(_bad("fleet", f"must be one of {list(FLEET_NAMES)}"))
    return fleet, params.get("route_id")


def _parse_bbox(raw: str, errors) -> tuple[float, float, float, float] | None:
    parts = raw.split(",")
    if len(parts) != 4:
        errors.append(_bad("bbox", "expected min_lat,min_lon,max_lat,max_lon"))
        return None
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        errors.append(_bad("bbox", f"non-numeric bound in {raw!r}"))
        return None
    if not all(math.isfinite(v) for v in vals):
        errors.append(_bad("bbox", "bounds must be finite"))
        return None
    if vals[0] > vals[2] or vals[1] > vals[3]:
        errors.append(_bad("bbox", "min bound exceeds max bound"))
        return None
    return vals


def parse_aggregate_query(params) -> ApiQuery:
    errors: list[dict] = []
    from_ms, to_ms = _parse_range(params, errors)
    group_by = params.get("group_by")
    if group_by is None:
        errors.append(_bad("group_by", "required"))
    elif group_by not in GROUP_KEYS:
        errors.append(_bad("group_by", f"must be one of {list(GROUP_KEYS)}"))
    fleet, route_id = _parse_filters(params, errors)
    if params.get("bbox") is not None:
        errors.append(_bad("bbox", "only /api/v1/segments accepts a bbox"))
    if errors:
        raise QueryError(errors)
    return ApiQuery(from_ms, to_ms, group_by, fleet, route_id)


def parse_segments_query(params) -> ApiQuery:
    errors: list[dict] = []
    from_ms, to_ms = _parse_range(params, errors)
    fleet, route_id = _parse_filters(params, errors)
    raw = params.get("bbox")
    bbox = None
    if raw is None:
        errors.append(_bad("bbox", "required"))
    else:
        bbox = _parse_bbox(raw, errors)
    if params.get("group_by") not in (None, "segment"):
        errors.append(_bad("group_by", "segments are always grouped by segment"))
    if errors:
        raise QueryError(errors)
    return ApiQuery(from_ms, to_ms, "segment", fleet, route_id, bbox)


def aggregate_response(store: GeoStore, query: ApiQuery) -> dict:
    rows = store.aggregate_energy(query.group_by, query.from_ms, query.to_ms,
                                  fleet=query.fleet, route=query.route_id)
    return {
        "query": query.echo(),
        "units": UNITS,
        "rows": [{"key": r.key, "energy_kwh": r.energy_kwh,
                  "distance_mi": r.distance_mi, "kwh_per_mile": r.kwh_per_mile,
                  "sample_count": r.sample_count} for r in rows],
    }


def _poly_bbox(polyline) -> tuple[float, float, float, float]:
    lats = [p.lat for p in polyline]
    lons = [p.lon for p in polyline]
    return (min(lats), min(lons), max(lats), max(lons))


def _boxes_overlap(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def segments_response(store: GeoStore, network: RoadNetwork | None,
                      query: ApiQuery) -> dict:
    """Traveled segments whose geometry touches the bbox, with aggregates.

    A segment with recorded travel but no known geometry cannot be placed
    on a map and is omitted.
    """
    rows = store.aggregate_energy("segment", query.from_ms, query.to_ms,
                                  fleet=query.fleet, route=query.route_id)
    geoms = {s.segment_id: s for s in network.segments} if network else {}
    out = []
    for r in rows:
        seg = geoms.get(r.key)
        if seg is None or not _boxes_overlap(query.bbox, _poly_bbox(seg.polyline)):
            continue
        out.append({
            "segment_id": r.key,
            "polyline": [[p.lat, p.lon] for p in seg.polyline],
            "energy_kwh": r.energy_kwh,
            "distance_mi": r.distance_mi,
            "kwh_per_mile": r.kwh_per_mile,
            "sample_count": r.sample_count,
        })
    return {"query": query.echo(), "units": UNITS, "segments": out}


def _replay(broker: Broker, topic: TopicName, cap: Capability):
    sub = f"gateway-scan-{topic.topic}"
    cursor = broker.open_cursor(topic, "earliest", sub, cap, reset=True)
    out = []
    while True:
        batch, cursor = broker.read_next(cursor, 2000)
        if not batch:
            break
        out.extend(batch)
    broker.drop_subscription(topic, sub, cap)
    return out


def parse_alert_cursor(raw: str) -> tuple[int, int]:
    try:
        ts, off = raw.split(":")
        return int(ts), int(off)
    except ValueError:
        raise QueryError([_bad("cursor", f"malformed cursor {raw!r}")]) from None


def alerts_response(broker: Broker, cap: Capability, alerts_topic: str,
                    from_ms: int, to_ms: int, limit: int = DEFAULT_PAGE,
                    cursor: tuple[int, int] | None = None) -> dict:
    """Alerts with publish ts in [from_ms, to_ms), newest first.

    The page cursor is the (ts_ms, offset) of the last row delivered;
    later appends sort before it, so pages never shift under a growing
    ledger.
    """
    topic = parse_topic_name(alerts_topic)
    if topic not in set(broker.topics()):
        return {"alerts": [], "next_cursor": None}
    rows = [(rec.ts_ms, rec.offset, parse_payload(rec.payload))
            for rec in _replay(broker, topic, cap)
            if from_ms <= rec.ts_ms < to_ms]
    rows.sort(key=lambda r: (r[0], r[1]), reverse=True)
    if cursor is not None:
        rows = [r for r in rows if (r[0], r[1]) < cursor]
    page = rows[:limit]
    next_cursor = f"{page[-1][0]}:{page[-1][1]}" if len(rows) > limit else None
    return {
        "alerts": [{"ts_ms": ts, "offset": off, **obj} for ts, off, obj in page],
        "next_cursor": next_cursor,
    }


def stats_response(broker: Broker, report_dir: str | None = None) -> dict:
    topics = [{"topic": str(s.topic), "total_records": s.total_records,
               "first_ts_ms": s.first_ts_ms, "last_ts_ms": s.last_ts_ms}
              for s in broker.all_stats()]
    last = None
    if report_dir:
        reports = sorted(Path(report_dir).glob("*.json"))
        if reports:
            last = json.loads(reports[-1].read_text())
    return {"topics": topics, "last_report": last}


@dataclass
class GatewayState:
    """Everything the handlers read; shared, never mutated by requests."""

    broker: Broker
    store: GeoStore
    cap: Capability  # tenant identity used for internal reads
    network: RoadNetwork | None = None
    alerts_topic: str = "carta/monitoring/alerts"
    report_dir: str | None = None
    static_dir: str | None = None


class Utf8JSON(JSONResponse):
    media_type = "application/json; charset=utf-8"


def create_app(state: GatewayState) -> FastAPI:
    app = FastAPI(title="fleetstream gateway", default_response_class=Utf8JSON,
                  openapi_url=None, docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(HTTPException)
    async def _http_exc(_request, exc: HTTPException):
        detail = exc.detail
        if isinstance(detail, str):
            detail = {"errors": [_bad(None, detail)]}
        return Utf8JSON({"detail": detail}, status_code=exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def _validation_exc(_request, exc: RequestValidationError):
        return Utf8JSON({"detail": {"errors": [_bad(None, str(exc))]}}, status_code=400)

    def _q400(fn, params):
        try:
            return fn(params)
        except QueryError as e:
            raise HTTPException(400, {"errors": e.errors}) from None

    @app.get("/api/v1/aggregate")
    def api_aggregate(request: Request):
        query = _q400(parse_aggregate_query, request.query_params)
        try:
            return aggregate_response(state.store, query)
        except Exception as e:
            raise HTTPException(500, {"errors": [_bad(None, f"store failure: {e}")]})

    @app.get("/api/v1/segments")
    def api_segments(request: Request):
        query = _q400(parse_segments_query, request.query_params)
        try:
            return segments_response(state.store, state.network, query)
        except Exception as e:
            raise HTTPException(500, {"errors": [_bad(None, f"store failure: {e}")]})

    @app.get("/api/v1/alerts")
    def api_alerts(request: Request):
        params = request.query_params
        errors: list[dict] = []
        from_ms, to_ms = _parse_range(params, errors)
        limit = _parse_int(params, "limit", errors, required=False, default=DEFAULT_PAGE)
        if limit is not None and not 1 <= limit <= MAX_PAGE:
            errors.append(_bad("limit", f"must be in [1, {MAX_PAGE}]"))
        if errors:
            raise HTTPException(400, {"errors": errors})
        cursor = None
        if params.get("cursor") is not None:
            try:
                cursor = parse_alert_cursor(params["cursor"])
            except QueryError as e:
                raise HTTPException(400, {"errors": e.errors}) from None
        try:
            return alerts_response(state.broker, state.cap, state.alerts_topic,
                                   from_ms, to_ms, limit, cursor)
        except Exception as e:
            raise HTTPException(500, {"errors": [_bad(None, f"broker failure: {e}")]})

    @app.get("/api/v1/topics/stats")
    def api_topic_stats():
        try:
            return stats_response(state.broker, state.report_dir)
        except Exception as e:
            raise HTTPException(500, {"errors": [_bad(None, f"broker failure: {e}")]})

    # --- broker wire endpoints -----------------------------------------------

    def _wire_cap(request: Request, tenant: str) -> Capability:
        auth = request.headers.get("authorization", "")
        if not auth.startswith("Bearer "):
            raise HTTPException(401, {"errors": [_bad("authorization", "bearer token required")]})
        try:
            return state.broker.authenticate(tenant, auth[len("Bearer "):])
        except AuthFailed:
            raise HTTPException(401, {"errors": [_bad("authorization", "unknown tenant or bad secret")]})

    def _wire_topic(tenant: str, category: str, topic: str) -> TopicName:
        try:
            return TopicName(tenant, category, topic)
        except MalformedTopic as e:
            raise HTTPException(400, {"errors": [_bad("topic", str(e))]})

    async def _json_body(request: Request) -> dict:
        try:
            body = json.loads(await request.body())
        except ValueError:
            raise HTTPException(400, {"errors": [_bad(None, "body must be JSON")]})
        if not isinstance(body, dict):
            raise HTTPException(400, {"errors": [_bad(None, "body must be a JSON object")]})
        return body

    @app.post("/v1/topics/{tenant}/{category}/{topic}/publish")
    async def wire_publish(tenant: str, category: str, topic: str, request: Request):
        cap = _wire_cap(request, tenant)
        name = _wire_topic(tenant, category, topic)
        body = await _json_body(request)
        ts_ms = body.get("ts_ms")
        if not isinstance(ts_ms, int) or isinstance(ts_ms, bool) or ts_ms < 0:
            raise HTTPException(400, {"errors": [_bad("ts_ms", "must be a non-negative integer")]})
        if "payload" not in body:
            raise HTTPException(400, {"errors": [_bad("payload", "required")]})
        state.broker.create_topic(name, cap)  # idempotent; the wire has no separate create
        offset = state.broker.publish(name, ts_ms, canonical_json(body["payload"]), cap)
        return {"offset": offset}

    @app.post("/v1/topics/{tenant}/{category}/{topic}/cursor")
    async def wire_cursor(tenant: str, category: str, topic: str, request: Request):
        cap = _wire_cap(request, tenant)
        name = _wire_topic(tenant, category, topic)
        body = await _json_body(request)
        sub = body.get("subscription")
        if not isinstance(sub, str) or not sub:
            raise HTTPException(400, {"errors": [_bad("subscription", "must be a non-empty string")]})
        start = body.get("start", "earliest")
        if not (start in ("earliest", "latest") or isinstance(start, int)):
            raise HTTPException(400, {"errors": [_bad("start", "must be 'earliest', 'latest', or an offset")]})
        try:
            cur = state.broker.open_cursor(name, start, sub, cap, reset=bool(body.get("reset", False)))
        except UnknownTopic:
            raise HTTPException(404, {"errors": [_bad("topic", f"no such topic {name}")]})
        except OffsetOutOfRange as e:
            raise HTTPException(400, {"errors": [_bad("start", str(e))]})
        except Forbidden as e:
            raise HTTPException(403, {"errors": [_bad("topic", str(e))]})
        return {"subscription": sub, "next_offset": cur.next_offset}

    @app.get("/v1/topics/{tenant}/{category}/{topic}/read")
    def wire_read(tenant: str, category: str, topic: str, request: Request):
        cap = _wire_cap(request, tenant)
        name = _wire_topic(tenant, category, topic)
        params = request.query_params
        sub = params.get("subscription")
        if not sub:
            raise HTTPException(400, {"errors": [_bad("subscription", "required")]})
        errors: list[dict] = []
        max_records = _parse_int(params, "max", errors, required=False, default=500)
        if errors or not 1 <= max_records <= 5000:
            raise HTTPException(400, {"errors": errors or [_bad("max", "must be in [1, 5000]")]})
        try:
            # resumes the persisted position; brand-new subscriptions start at 0
            cur = state.broker.open_cursor(name, "earliest", sub, cap)
        except UnknownTopic:
            raise HTTPException(404, {"errors": [_bad("topic", f"no such topic {name}")]})
        except Forbidden as e:
            raise HTTPException(403, {"errors": [_bad("topic", str(e))]})
        batch, cur = state.broker.read_next(cur, max_records)
        records = []
        for rec in batch:
            row = {"offset": rec.offset, "ts_ms": rec.ts_ms}
            try:
                row["payload"] = parse_payload(rec.payload)
            except ValueError:
                row["payload_b64"] = base64.b64encode(rec.payload).decode("ascii")
            records.append(row)
        return {"records": records, "next_offset": cur.next_offset}

    if state.static_dir is not None and Path(state.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=state.static_dir, html=True), name="static")

    return app
