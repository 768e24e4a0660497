// Console wiring. Truth lives on the server: everything rendered here
// comes either from the event stream or from an acknowledged response,
// never from local guesses about what a submit will do.

import { fetchTwin } from "./api.js";
import { renderEventLog, renderRoster, renderTwin } from "./render.js";
import { connectStream, type StreamHandle } from "./sse.js";
import { ConsoleStore } from "./store.js";
import { submitFeedback } from "./submit.js";
import type { Feedback, PredictionEvent, StreamStatus } from "./types.js";

const TWIN_REFRESH_MS = 1500;

function need(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

export function boot(base = ""): void {
  const store = new ConsoleStore();
  const statusEl = need("stream-status");
  const counterEl = need("stream-counter");
  const rosterBody = need("roster-body");
  const twinPanel = need("twin-panel");
  const eventLog = need("event-log");
  const patientField = need("fb-patient") as HTMLInputElement;
  const overrideField = need("fb-override") as HTMLInputElement;
  const overrideButton = need("fb-override-send") as HTMLButtonElement;
  const outcomeSelect = need("fb-tms") as HTMLSelectElement;
  const outcomeValue = need("fb-outcome") as HTMLSelectElement;
  const outcomeButton = need("fb-outcome-send") as HTMLButtonElement;
  const ackLine = need("fb-ack");
  const reconnectButton = need("reconnect") as HTMLButtonElement;

  let selectedId: string | null = null;
  let twinFetchedAt = 0;
  let stream: StreamHandle | null = null;
  let sending = false;

  const setStatus = (status: StreamStatus) => {
    statusEl.textContent = status;
    statusEl.className = `status ${status}`;
  };

  const refreshTwin = (force = false) => {
    if (!selectedId) {
      renderTwin(twinPanel, null);
      return;
    }
    const now = Date.now();
    if (!force && now - twinFetchedAt < TWIN_REFRESH_MS) return;
    twinFetchedAt = now;
    const id = selectedId;
    fetchTwin(base, id).then(
      (twin) => {
        if (selectedId === id) renderTwin(twinPanel, twin);
      },
      () => renderTwin(twinPanel, null),
    );
  };

  const refreshForms = () => {
    const history = selectedId ? store.history(selectedId) : [];
    patientField.value = selectedId ?? "";
    const haveSelection = selectedId !== null;
    // A redraw while a submit is in flight must not re-arm the buttons,
    // or a double click with a stream event in between would POST twice.
    overrideButton.disabled = !haveSelection || sending;
    outcomeButton.disabled = !haveSelection || history.length === 0 || sending;
    const previous = outcomeSelect.value;
    outcomeSelect.replaceChildren();
    for (const event of history.slice(-12).reverse()) {
      const option = document.createElement("option");
      option.value = String(event.t_ms);
      option.textContent = `t=${event.t_ms} p=${event.p_arrest.toFixed(3)}`;
      outcomeSelect.appendChild(option);
    }
    if ([...outcomeSelect.options].some((o) => o.value === previous)) {
      outcomeSelect.value = previous;
    }
  };

  const redraw = () => {
    renderRoster(rosterBody, store.rows(), selectedId, (patientId) => {
      selectedId = patientId;
      refreshTwin(true);
      redraw();
    });
    renderEventLog(eventLog, selectedId ? store.history(selectedId) : []);
    counterEl.textContent = `${store.accepted} events, ${store.duplicates} duplicates dropped`;
    refreshForms();
  };

  store.subscribe(() => {
    redraw();
    refreshTwin();
  });

  const openStream = () => {
    stream?.close();
    stream = connectStream(`${base}/predictions/stream`, {
      onEvent: (payload) => {
        let event: PredictionEvent;
        try {
          event = JSON.parse(payload) as PredictionEvent;
        } catch {
          return; // malformed payload, skip rather than poison the view
        }
        store.apply(event);
      },
      onStatus: setStatus,
    });
  };

  const submit = async (button: HTMLButtonElement, feedback: Feedback) => {
    if (sending) return;
    sending = true;
    try {
      await submitFeedback(base, button, ackLine, feedback);
    } finally {
      sending = false;
      refreshForms();
    }
  };

  overrideButton.addEventListener("click", () => {
    if (!selectedId) return;
    const p = Number(overrideField.value);
    void submit(overrideButton, { patient_id: selectedId, override_p: p, weight: 1 });
  });

  outcomeButton.addEventListener("click", () => {
    if (!selectedId || outcomeSelect.value === "") return;
    void submit(outcomeButton, {
      patient_id: selectedId,
      t_ms: Number(outcomeSelect.value),
      outcome: outcomeValue.value === "1" ? 1 : 0,
    });
  });

  // Clearing and re-subscribing must rebuild the identical view from
  // the server's snapshot plus live events; handy for demos and for
  // verifying that no client-side state invented itself.
  reconnectButton.addEventListener("click", () => {
    store.clear();
    selectedId = null;
    redraw();
    openStream();
  });

  redraw();
  openStream();
}

declare global {
  interface Window {
    cardiotwinBoot?: typeof boot;
  }
}

if (typeof document !== "undefined") {
  window.cardiotwinBoot = boot;
  document.addEventListener("DOMContentLoaded", () => boot(""));
}
