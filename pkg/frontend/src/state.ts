// Dashboard state: one snapshot of (controls, responses) at a time.
//
// The invariant is that the visible data always came from the visible
// controls.  Every refresh takes a token; a response batch is applied only
// if its token is still the latest, so a slow earlier request can never
// overwrite a newer view ("stale responses discarded").  The three
// responses of a batch are applied atomically or not at all, and a failed
// refresh leaves the previous snapshot in place with an error banner.

import type {
  AggregateResponse,
  AlertsResponse,
  Controls,
  SegmentsResponse,
} from "./api";

export interface Snapshot {
  controls: Controls;
  aggregate: AggregateResponse;
  segments: SegmentsResponse;
  alerts: AlertsResponse;
}

export interface Fetchers {
  aggregate(c: Controls): Promise<AggregateResponse>;
  segments(c: Controls): Promise<SegmentsResponse>;
  alerts(c: Controls): Promise<AlertsResponse>;
}

export type RefreshResult = "applied" | "stale" | "error";

export class DashboardState {
  private token = 0;
  snapshot: Snapshot | null = null;
  error: string | null = null;
  private listeners: (() => void)[] = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  async refresh(controls: Controls, api: Fetchers): Promise<RefreshResult> {
    const token = ++this.token;
    try {
      const [aggregate, segments, alerts] = await Promise.all([
        api.aggregate(controls),
        api.segments(controls),
        api.alerts(controls),
      ]);
      if (token !== this.token) return "stale";
      this.snapshot = { controls, aggregate, segments, alerts };
      this.error = null;
      this.notify();
      return "applied";
    } catch (e) {
      if (token !== this.token) return "stale";
      this.error = e instanceof Error ? e.message : String(e);
      this.notify(); // snapshot intentionally untouched
      return "error";
    }
  }
}
