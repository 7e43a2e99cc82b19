// Alert feed: the gateway already orders alerts newest first; render in
// response order, one line per alert, message text verbatim.

import type { AlertsResponse } from "./api";
import { tsLabel } from "./format";

export function renderAlerts(container: HTMLElement, resp: AlertsResponse): void {
  container.replaceChildren();
  if (resp.alerts.length === 0) {
    const div = document.createElement("div");
    div.className = "empty-state";
    div.textContent = "No alerts in this range.";
    container.appendChild(div);
    return;
  }

  const list = document.createElement("ul");
  list.className = "alert-list";
  for (const alert of resp.alerts) {
    const item = document.createElement("li");
    item.className = `alert alert-${alert.severity}`;
    item.dataset.kind = alert.kind;
    item.dataset.subject = alert.subject;

    const head = document.createElement("span");
    head.className = "alert-head";
    head.textContent = `${alert.kind} · ${alert.subject} · ${alert.date}`;

    const body = document.createElement("span");
    body.className = "alert-message";
    body.textContent = alert.message;

    const when = document.createElement("span");
    when.className = "alert-when";
    when.textContent = tsLabel(alert.ts_ms);

    item.append(head, body, when);
    list.appendChild(item);
  }
  container.appendChild(list);

  if (resp.next_cursor !== null) {
    const more = document.createElement("div");
    more.className = "alert-more";
    more.textContent = "More alerts available…";
    more.dataset.cursor = resp.next_cursor;
    container.appendChild(more);
  }
}
