// Wiring: read the control inputs, validate, fire the three queries, and
// repaint panels when a snapshot applies.  Exported as a function over
// (document, fetchers) so tests can drive the whole loop headlessly.

import { GatewayClient, validateControls, type Controls } from "./api";
import { renderAlerts } from "./alerts";
import { renderChart } from "./chart";
import { renderMap } from "./map";
import { DashboardState, type Fetchers } from "./state";

const DAY_MS = 86_400_000;

function input(doc: Document, id: string): HTMLInputElement {
  return doc.getElementById(id) as HTMLInputElement;
}

export function readControls(doc: Document): Controls {
  const fleet = (doc.getElementById("fleet") as HTMLSelectElement).value;
  const route = input(doc, "route").value.trim();
  return {
    fromMs: Number(input(doc, "from-ms").value),
    toMs: Number(input(doc, "to-ms").value),
    groupBy: (doc.getElementById("group-by") as HTMLSelectElement)
      .value as Controls["groupBy"],
    fleet: fleet === "" ? null : fleet,
    routeId: route === "" ? null : route,
    bbox: input(doc, "bbox").value.trim(),
    alertLimit: 100,
  };
}

export function boot(doc: Document, fetchers: Fetchers): DashboardState {
  const state = new DashboardState();
  const banner = doc.getElementById("banner")!;

  state.onChange(() => {
    if (state.error !== null) {
      banner.textContent = state.error;
      banner.classList.remove("hidden");
      return; // previous panels stay put
    }
    banner.classList.add("hidden");
    const snap = state.snapshot!;
    renderMap(doc.getElementById("map")!, snap.segments);
    renderChart(doc.getElementById("chart")!, snap.aggregate);
    renderAlerts(doc.getElementById("alerts")!, snap.alerts);
    doc.getElementById("shown-range")!.textContent =
      `${snap.controls.fromMs} – ${snap.controls.toMs}`;
  });

  const apply = () => {
    const controls = readControls(doc);
    const problems = validateControls(controls);
    if (problems.length > 0) {
      banner.textContent = problems.join("; ");
      banner.classList.remove("hidden");
      return;
    }
    void state.refresh(controls, fetchers);
  };

  doc.getElementById("apply")!.addEventListener("click", apply);
  for (const id of ["from-ms", "to-ms", "route", "bbox"]) {
    doc.getElementById(id)!.addEventListener("keydown", (e) => {
      if ((e as KeyboardEvent).key === "Enter") apply();
    });
  }
  for (const id of ["fleet", "group-by"]) {
    doc.getElementById(id)!.addEventListener("change", apply);
  }
  return state;
}

// Browser entry point; tests import the pieces instead.
if (typeof document !== "undefined" && document.getElementById("apply") !== null) {
  const client = new GatewayClient("");
  const now = Date.now();
  const from = input(document, "from-ms");
  const to = input(document, "to-ms");
  if (from.value === "") from.value = String(now - 7 * DAY_MS);
  if (to.value === "") to.value = String(now);
  const state = boot(document, client);
  void state.refresh(readControls(document), client);
}
