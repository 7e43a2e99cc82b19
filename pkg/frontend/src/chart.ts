// Aggregate comparison chart: one bar per group (fleet, route, or segment)
// sized by kWh/mile.  Bar geometry is presentation; every printed number is
// the response field verbatim.

import type { AggregateResponse } from "./api";
import { show } from "./format";

export function renderChart(container: HTMLElement, resp: AggregateResponse): void {
  container.replaceChildren();
  if (resp.rows.length === 0) {
    const div = document.createElement("div");
    div.className = "empty-state";
    div.textContent = "No samples in this range.";
    container.appendChild(div);
    return;
  }

  const peak = Math.max(...resp.rows.map((r) => r.kwh_per_mile ?? 0), 0);
  const list = document.createElement("div");
  list.className = "chart";
  for (const row of resp.rows) {
    const item = document.createElement("div");
    item.className = "chart-row";
    item.dataset.key = row.key;

    const label = document.createElement("span");
    label.className = "chart-label";
    label.textContent = row.key;

    const track = document.createElement("div");
    track.className = "chart-track";
    const bar = document.createElement("div");
    bar.className = "chart-bar";
    const frac = peak > 0 && row.kwh_per_mile !== null ? row.kwh_per_mile / peak : 0;
    bar.style.width = `${(frac * 100).toFixed(2)}%`;
    track.appendChild(bar);

    const value = document.createElement("span");
    value.className = "chart-value";
    value.textContent = show(row.kwh_per_mile);

    const detail = document.createElement("span");
    detail.className = "chart-detail";
    detail.textContent =
      `${show(row.energy_kwh)} kWh / ${show(row.distance_mi)} mi, ` +
      `${show(row.sample_count)} increments`;

    item.append(label, track, value, detail);
    list.appendChild(item);
  }
  const units = document.createElement("div");
  units.className = "chart-units";
  units.textContent = resp.units;
  container.append(list, units);
}
