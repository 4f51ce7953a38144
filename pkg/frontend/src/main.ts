/**
 * Browser bootstrap: wires the API client and event stream to the page.
 *
 * The console is a pure client of the operator API — closing this page never
 * affects mission execution. API base defaults to port 8080 on the page's
 * host; override with ?api=http://host:port.
 */

import { ApiError, ConsoleClient, openEventStream } from "./client.js";
import {
  applyEvent,
  focusedTrace,
  initialState,
  noteSubmitted,
  setBanner,
  setConnection,
  type ConsoleState,
} from "./state.js";
import type { StreamEvent } from "./types.js";
import {
  renderAlerts,
  renderBanner,
  renderDevices,
  renderHistory,
  renderMap,
  renderQueue,
  renderStatus,
  renderTrace,
} from "./view.js";

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  if (override) return override;
  return `${window.location.protocol}//${window.location.hostname}:8080`;
}

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

const client = new ConsoleClient(apiBase());
let state: ConsoleState = initialState();
let frame = 0;

function update(next: ConsoleState): void {
  state = next;
  if (frame !== 0) return; // coalesce bursts into one paint
  frame = requestAnimationFrame(() => {
    frame = 0;
    render();
  });
}

function render(): void {
  panel("status").innerHTML = renderStatus(state);
  panel("banner").innerHTML = renderBanner(state);
  panel("map").innerHTML = renderMap(state);
  panel("devices").innerHTML = renderDevices(state);
  panel("queue").innerHTML = renderQueue(state);
  panel("alerts").innerHTML = renderAlerts(state);
  panel("history").innerHTML = renderHistory(state);
  renderTracePanel();
}

/** Keep open <details> open across re-renders; reload audit text on expand. */
function renderTracePanel(): void {
  const container = panel("trace");
  const wasOpen = container.querySelector("details.audit[open]") !== null;
  container.innerHTML = renderTrace(focusedTrace(state));
  const details = container.querySelector<HTMLDetailsElement>("details.audit");
  if (!details) return;
  if (wasOpen) {
    details.open = true;
    void loadAudit(details);
  }
  details.addEventListener("toggle", () => {
    if (details.open) void loadAudit(details);
  });
}

async function loadAudit(details: HTMLDetailsElement): Promise<void> {
  const missionId = details.dataset.missionId;
  if (!missionId || details.dataset.loaded === missionId) return;
  const promptEl = details.querySelector<HTMLPreElement>("[data-role=prompt]");
  const rawEl = details.querySelector<HTMLPreElement>("[data-role=raw]");
  if (!promptEl || !rawEl) return;
  try {
    const record = await client.getMission(missionId);
    promptEl.textContent = record.decision_prompt || "(no prompt recorded)";
    rawEl.textContent = record.raw_response || "(no model output recorded)";
    details.dataset.loaded = missionId;
  } catch (err) {
    promptEl.textContent = `failed to load: ${String(err)}`;
  }
}

function wireForm(): void {
  const form = panel("command-form") as HTMLFormElement;
  const input = panel("command-input") as HTMLInputElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value;
    if (text.trim() === "") return; // client-side validation: no request
    void (async () => {
      try {
        const missionId = await client.submitMission(text);
        input.value = ""; // accepted: clear for the next command
        update(noteSubmitted(setBanner(state, null), missionId, text));
      } catch (err) {
        // submission failed: keep the input so the operator can retry
        const detail = err instanceof ApiError ? err.message : String(err);
        update(setBanner(state, detail));
      }
    })();
  });
}

function start(): void {
  wireForm();
  render();
  openEventStream(client, {
    onEvent: (event: StreamEvent) => update(applyEvent(state, event)),
    onStatus: (connected, detail) => update(setConnection(state, connected, detail)),
  });
}

start();
