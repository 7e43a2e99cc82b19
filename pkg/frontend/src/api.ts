// Typed client for the gateway's read-only query API.  Every request the
// dashboard makes goes through buildquery helpers here, so the mapping
// from control values to query params is testable in one place.

export interface Controls {
  fromMs: number;
  toMs: number;
  groupBy: "fleet" | "route" | "segment";
  fleet: string | null;
  routeId: string | null;
  bbox: string; // "min_lat,min_lon,max_lat,max_lon" — the map viewport
  alertLimit: number;
}

export interface QueryEcho {
  from_ms: number;
  to_ms: number;
  group_by: string;
  fleet: string | null;
  route_id: string | null;
  bbox: number[] | null;
}

export interface AggregateRow {
  key: string;
  energy_kwh: number;
  distance_mi: number;
  kwh_per_mile: number | null;
  sample_count: number;
}

export interface AggregateResponse {
  query: QueryEcho;
  units: string;
  rows: AggregateRow[];
}

export interface SegmentRow {
  segment_id: string;
  polyline: number[][]; // [[lat, lon], ...]
  energy_kwh: number;
  distance_mi: number;
  kwh_per_mile: number | null;
  sample_count: number;
}

export interface SegmentsResponse {
  query: QueryEcho;
  units: string;
  segments: SegmentRow[];
}

export interface AlertRow {
  ts_ms: number;
  offset: number;
  kind: string;
  subject: string;
  date: string;
  observed: number;
  severity: string;
  message: string;
}

export interface AlertsResponse {
  alerts: AlertRow[];
  next_cursor: string | null;
}

const FLEETS = ["diesel", "electric", "hybrid"];

/** Client-side mirror of the API's request validation: same checks, same
 *  field names, so anything we send is something the gateway would accept. */
export function validateControls(c: Controls): string[] {
  const errors: string[] = [];
  if (!Number.isInteger(c.fromMs)) errors.push("from_ms: not an integer");
  if (!Number.isInteger(c.toMs)) errors.push("to_ms: not an integer");
  if (Number.isInteger(c.fromMs) && Number.isInteger(c.toMs) && c.fromMs > c.toMs) {
    errors.push("from_ms: must be <= to_ms");
  }
  if (c.fleet !== null && !FLEETS.includes(c.fleet)) {
    errors.push(`fleet: must be one of ${FLEETS.join(", ")}`);
  }
  const parts = c.bbox.split(",").map(Number);
  if (parts.length !== 4 || parts.some((v) => !Number.isFinite(v))) {
    errors.push("bbox: expected min_lat,min_lon,max_lat,max_lon");
  } else if (parts[0]! > parts[2]! || parts[1]! > parts[3]!) {
    errors.push("bbox: min bound exceeds max bound");
  }
  if (!Number.isInteger(c.alertLimit) || c.alertLimit < 1 || c.alertLimit > 1000) {
    errors.push("limit: must be in [1, 1000]");
  }
  return errors;
}

function base(c: Controls): URLSearchParams {
  const p = new URLSearchParams();
  p.set("from_ms", String(c.fromMs));
  p.set("to_ms", String(c.toMs));
  if (c.fleet !== null) p.set("fleet", c.fleet);
  if (c.routeId !== null && c.routeId !== "") p.set("route_id", c.routeId);
  return p;
}

export function aggregateParams(c: Controls): URLSearchParams {
  const p = base(c);
  p.set("group_by", c.groupBy);
  return p;
}

export function segmentsParams(c: Controls): URLSearchParams {
  const p = base(c);
  p.set("bbox", c.bbox);
  return p;
}

export function alertsParams(c: Controls): URLSearchParams {
  const p = new URLSearchParams();
  p.set("from_ms", String(c.fromMs));
  p.set("to_ms", String(c.toMs));
  p.set("limit", String(c.alertLimit));
  return p;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errors: { field: string | null; message: string }[],
  ) {
    super(errors.map((e) => (e.field ? `${e.field}: ${e.message}` : e.message)).join("; "));
  }
}

type FetchLike = (url: string) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class GatewayClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (url) => fetch(url),
  ) {}

  private async get<T>(path: string, params: URLSearchParams): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}?${params}`);
    if (!resp.ok) {
      let errors = [{ field: null as string | null, message: `HTTP ${resp.status}` }];
      try {
        const body = (await resp.json()) as { detail?: { errors?: typeof errors } };
        if (body.detail?.errors) errors = body.detail.errors;
      } catch {
        // non-JSON error body; keep the status-only message
      }
      throw new ApiError(resp.status, errors);
    }
    return (await resp.json()) as T;
  }

  aggregate(c: Controls): Promise<AggregateResponse> {
    return this.get("/api/v1/aggregate", aggregateParams(c));
  }

  segments(c: Controls): Promise<SegmentsResponse> {
    return this.get("/api/v1/segments", segmentsParams(c));
  }

  alerts(c: Controls): Promise<AlertsResponse> {
    return this.get("/api/v1/alerts", alertsParams(c));
  }
}
