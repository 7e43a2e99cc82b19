// Displayed numbers are response fields verbatim: String(x) of the JSON
// value, no rounding or unit math in the client.  A null (e.g. kwh_per_mile
// with zero distance) renders as an em dash.

export function show(value: number | null | undefined): string {
  return value === null || value === undefined ? "—" : String(value);
}

export function tsLabel(tsMs: number): string {
  return new Date(tsMs).toISOString().replace("T", " ").slice(0, 19);
}
