// The map layer: traveled road segments as SVG polylines colored by
// kWh/mile, drawn straight from the API's geometry — no tile server.
// Hovering a segment shows its id and exact value via the SVG <title>.

import type { SegmentsResponse } from "./api";
import { colorFor, NO_DATA_COLOR, SCALE } from "./color";
import { show } from "./format";

const SVG_NS = "http://www.w3.org/2000/svg";

function emptyState(container: HTMLElement, message: string): void {
  const div = document.createElement("div");
  div.className = "empty-state";
  div.textContent = message;
  container.appendChild(div);
}

export function renderMap(container: HTMLElement, resp: SegmentsResponse): void {
  container.replaceChildren();
  if (resp.segments.length === 0) {
    emptyState(container, "No traveled segments in this view.");
    return;
  }

  const lats: number[] = [];
  const lons: number[] = [];
  for (const seg of resp.segments) {
    for (const [lat, lon] of seg.polyline as [number, number][]) {
      lats.push(lat);
      lons.push(lon);
    }
  }
  const minLat = Math.min(...lats);
  const maxLat = Math.max(...lats);
  const minLon = Math.min(...lons);
  const maxLon = Math.max(...lons);
  const pad = Math.max(maxLat - minLat, maxLon - minLon, 1e-4) * 0.05;

  const svg = document.createElementNS(SVG_NS, "svg");
  // y flipped: SVG grows downward, latitude grows upward
  svg.setAttribute(
    "viewBox",
    `${minLon - pad} ${-maxLat - pad} ${maxLon - minLon + 2 * pad} ${maxLat - minLat + 2 * pad}`,
  );
  svg.setAttribute("class", "seg-map");
  svg.setAttribute("preserveAspectRatio", "xMidYMid meet");

  for (const seg of resp.segments) {
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute(
      "points",
      seg.polyline.map(([lat, lon]) => `${lon},${-lat!}`).join(" "),
    );
    line.setAttribute("stroke", colorFor(seg.kwh_per_mile));
    line.setAttribute("fill", "none");
    line.setAttribute("vector-effect", "non-scaling-stroke");
    line.setAttribute("class", "seg-line");
    line.dataset.segmentId = seg.segment_id;
    line.dataset.kwhPerMile = show(seg.kwh_per_mile);
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${seg.segment_id}: ${show(seg.kwh_per_mile)} ${resp.units}`;
    line.appendChild(title);
    svg.appendChild(line);
  }
  container.appendChild(svg);
  container.appendChild(renderLegend(resp.units));
}

export function renderLegend(units: string): HTMLElement {
  const legend = document.createElement("div");
  legend.className = "legend";
  const caption = document.createElement("span");
  caption.className = "legend-units";
  caption.textContent = units;
  legend.appendChild(caption);
  for (const stop of SCALE) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.backgroundColor = stop.color;
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(stop.label));
    legend.appendChild(item);
  }
  const none = document.createElement("span");
  none.className = "legend-item";
  const swatch = document.createElement("span");
  swatch.className = "legend-swatch";
  swatch.style.backgroundColor = NO_DATA_COLOR;
  none.appendChild(swatch);
  none.appendChild(document.createTextNode("no distance"));
  legend.appendChild(none);
  return legend;
}
