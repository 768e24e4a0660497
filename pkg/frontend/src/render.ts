// Rendering. The formatters up top are pure so tests can cover them
// without a DOM; the render* functions below do the element work.

import type { PatientRow } from "./store.js";
import type { FeedbackAck, PredictionEvent, TwinSnapshot } from "./types.js";

export function riskBand(p: number): "low" | "mid" | "high" {
  if (p < 1 / 3) return "low";
  if (p < 2 / 3) return "mid";
  return "high";
}

export function fmtProbability(p: number): string {
  return p.toFixed(3);
}

export function fmtClock(tMs: number): string {
  const total = Math.floor(tMs / 1000);
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

/**
 * SVG path for a fixed-size sparkline. The vertical axis is scaled to
 * the data range; a flat trace draws a midline instead of dividing by
 * zero.
 */
export function sparklinePath(values: number[], width = 160, height = 36): string {
  if (values.length === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo;
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  const points = values.map((v, i) => {
    const x = i * step;
    const y = span === 0 ? height / 2 : height - ((v - lo) / span) * (height - 2) - 1;
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  return `M${points.join(" L")}`;
}

export function describeAck(ack: FeedbackAck): string {
  if (ack.kind === "override") {
    return `override accepted, blends into the next event (pending ${ack.pending})`;
  }
  const parts = [`outcome recorded`];
  if (ack.anomaly) parts.push("anomaly flagged");
  if (ack.queued) parts.push("queued for fine-tune");
  if (ack.fine_tuned) parts.push(`model fine-tuned to v${ack.model_version}`);
  return parts.join(", ");
}

// --- DOM section ---------------------------------------------------------

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderRoster(
  tbody: HTMLElement,
  rows: PatientRow[],
  selectedId: string | null,
  onSelect: (patientId: string) => void,
): void {
  tbody.replaceChildren();
  for (const row of rows) {
    const event = row.latest;
    const tr = el("tr", row.patientId === selectedId ? "selected" : undefined);
    tr.appendChild(el("td", undefined, row.patientId));
    const pCell = el("td", `risk ${riskBand(event.p_arrest)}`, fmtProbability(event.p_arrest));
    tr.appendChild(pCell);
    tr.appendChild(el("td", undefined, event.decision ? "arrest" : "stable"));
    tr.appendChild(el("td", undefined, event.source));
    tr.appendChild(el("td", event.anomaly ? "badge anomaly" : undefined, event.anomaly ? "3σ" : ""));
    tr.appendChild(el("td", undefined, fmtClock(event.t_ms)));
    tr.addEventListener("click", () => onSelect(row.patientId));
    tbody.appendChild(tr);
  }
}

export function renderTwin(panel: HTMLElement, twin: TwinSnapshot | null): void {
  panel.replaceChildren();
  if (!twin) {
    panel.appendChild(el("p", "hint", "select a patient to inspect the twin"));
    return;
  }
  const params = twin.params;
  panel.appendChild(el("h3", undefined, `twin of ${twin.patient_id}`));
  panel.appendChild(
    el(
      "p",
      undefined,
      `pressure ${twin.pressure.toFixed(2)}  R ${params.resistance}  C ${params.compliance}  ` +
        `SV ${params.stroke_volume}  updates ${twin.updates}`,
    ),
  );
  for (const [name, values] of Object.entries(twin.traces)) {
    const wrap = el("div", "trace");
    wrap.appendChild(el("span", "trace-name", name));
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", "0 0 160 36");
    svg.setAttribute("class", "spark");
    const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
    path.setAttribute("d", sparklinePath(values));
    svg.appendChild(path);
    wrap.appendChild(svg);
    const last = values[values.length - 1];
    wrap.appendChild(el("span", "trace-last", last === undefined ? "" : last.toFixed(2)));
    panel.appendChild(wrap);
  }
}

export function renderEventLog(list: HTMLElement, history: PredictionEvent[]): void {
  list.replaceChildren();
  const recent = history.slice(-12).reverse();
  for (const event of recent) {
    const item = el("li");
    const badge = event.anomaly ? " [3σ]" : "";
    item.textContent =
      `${fmtClock(event.t_ms)}  p=${fmtProbability(event.p_arrest)} ` +
      `${event.source} v${event.model_version}${badge}`;
    if (event.source === "fused") item.className = "fused";
    list.appendChild(item);
  }
}
