/**
 * HTML renderers: pure functions from console state to markup strings.
 *
 * Kept DOM-free so the reducer and the full render path are unit-testable in
 * node; main.ts only assigns the returned strings to panel containers.
 */

import { crossSegments, markersFrom, siteAnchors, MAP_SIZE } from "./map.js";
import type { ConsoleState, MissionTrace, StageView } from "./state.js";
import type {
  DispatchEntry,
  JudgeVerdict,
  Plan,
  SafeguardReport,
  ScoredRule,
} from "./types.js";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderStatus(state: ConsoleState): string {
  const cls = state.connected ? "status live" : "status down";
  const label = state.connected ? "live" : `offline (${escapeHtml(state.statusDetail)})`;
  return `<span class="${cls}">${label}</span> <span class="version">snapshot v${state.snapshotVersion}</span>`;
}

export function renderBanner(state: ConsoleState): string {
  if (state.banner === null) return "";
  return `<div class="banner" role="alert">${escapeHtml(state.banner)}</div>`;
}

export function renderMap(state: ConsoleState, size: number = MAP_SIZE): string {
  const spokes = crossSegments(size)
    .map((s) => `<line x1="${s.x1}" y1="${s.y1}" x2="${s.x2}" y2="${s.y2}" class="spoke"/>`)
    .join("");
  const anchors = siteAnchors(size)
    .map(
      (a) =>
        `<g class="site"><circle cx="${a.px}" cy="${a.py}" r="7" class="frame"/>` +
        `<text x="${a.px}" y="${a.py - 12}" text-anchor="middle">${escapeHtml(a.label)}</text></g>`,
    )
    .join("");
  const markers = markersFrom(state.assets, size)
    .map((m) => {
      const classes = ["marker", `kind-${m.kind || "unknown"}`];
      if (m.inTransit) classes.push("transit");
      if (m.unavailable) classes.push("unavailable");
      const title = `${m.name} @ ${m.frame} (${m.worldX.toFixed(1)}, ${m.worldY.toFixed(1)}) ` +
        `battery ${m.battery.toFixed(1)}% ${m.status}`;
      return (
        `<g class="${classes.join(" ")}" data-name="${escapeHtml(m.name)}"` +
        ` data-x="${m.worldX}" data-y="${m.worldY}">` +
        `<circle cx="${m.px}" cy="${m.py}" r="9"/>` +
        `<title>${escapeHtml(title)}</title>` +
        `<text x="${m.px}" y="${m.py + 20}" text-anchor="middle">${escapeHtml(shortName(m.name))}</text></g>`
      );
    })
    .join("");
  return (
    `<svg viewBox="0 0 ${size} ${size}" width="${size}" height="${size}" role="img" aria-label="site map">` +
    `${spokes}${anchors}${markers}</svg>`
  );
}

export function renderDevices(state: ConsoleState): string {
  if (state.devices.length === 0) return `<p class="empty">no devices connected</p>`;
  const rows = state.devices
    .map((name) => {
      const asset = state.assets[name];
      const detail = asset
        ? `${escapeHtml(asset.kind)} · ${escapeHtml(asset.frame)} · ${asset.battery.toFixed(1)}%`
        : "registered";
      return `<li><code>${escapeHtml(name)}</code> <span>${detail}</span></li>`;
    })
    .join("");
  return `<ul class="devices">${rows}</ul>`;
}

export function renderQueue(state: ConsoleState): string {
  const active = state.activeMission
    ? `<code>${escapeHtml(state.activeMission)}</code>`
    : "<em>idle</em>";
  const queued = state.queue.length
    ? `<ol>${state.queue.map((id) => `<li><code>${escapeHtml(id)}</code></li>`).join("")}</ol>`
    : `<p class="empty">queue empty</p>`;
  return `<p>active: ${active}</p>${queued}`;
}

export function renderAlerts(state: ConsoleState): string {
  if (state.deviceAlerts.length === 0) return `<p class="empty">no device alerts</p>`;
  const rows = [...state.deviceAlerts]
    .reverse()
    .map(
      (a) =>
        `<li><span class="badge alert">${escapeHtml(a.event)}</span> ` +
        `${escapeHtml(a.missionText)}</li>`,
    )
    .join("");
  return `<ul class="alerts">${rows}</ul>`;
}

export function renderHistory(state: ConsoleState): string {
  if (state.history.length === 0) return `<p class="empty">no finished missions</p>`;
  const rows = [...state.history]
    .reverse()
    .map((h) => {
      const cls = h.terminalState === "completed" ? "ok" : "bad";
      const command = h.command === null ? h.missionId : h.command;
      return (
        `<li class="${cls}"><span class="terminal ${cls}">${escapeHtml(h.terminalState)}</span> ` +
        `${escapeHtml(command)}${h.error ? ` — ${escapeHtml(h.error)}` : ""}</li>`
      );
    })
    .join("");
  return `<ul class="history">${rows}</ul>`;
}

export function renderTrace(trace: MissionTrace | null): string {
  if (trace === null) return `<p class="empty">no mission yet — submit a command</p>`;
  const head =
    `<p class="trace-head"><code>${escapeHtml(trace.missionId)}</code>` +
    (trace.command !== null ? ` ${escapeHtml(trace.command)}` : "") +
    (trace.queuedPosition !== null && trace.queuedPosition > 0
      ? ` <span class="badge">queued #${trace.queuedPosition}</span>`
      : "") +
    `</p>`;
  const stages = trace.stages.map(renderStage).join("");
  const terminal = trace.terminal
    ? renderTerminalLine(
        trace.terminal.terminal_state,
        trace.terminal.hybrid_success,
        trace.terminal.strict_success,
        trace.terminal.error,
      )
    : `<p class="pending">running…</p>`;
  const audit =
    `<details class="audit" data-mission-id="${escapeHtml(trace.missionId)}">` +
    `<summary>prompt &amp; raw model output</summary>` +
    `<pre class="prompt" data-role="prompt">(expand to load)</pre>` +
    `<pre class="raw" data-role="raw"></pre></details>`;
  return `${head}<ol class="stages">${stages}</ol>${terminal}${audit}`;
}

function renderTerminalLine(
  terminalState: string,
  hybrid: boolean,
  strict: boolean,
  error: string,
): string {
  const cls = terminalState === "completed" ? "ok" : "bad";
  return (
    `<p class="terminal ${cls}">${escapeHtml(terminalState)}` +
    ` <span class="flags">hybrid=${hybrid} strict=${strict}</span>` +
    (error ? ` — ${escapeHtml(error)}` : "") +
    `</p>`
  );
}

function renderStage(view: StageView): string {
  return `<li class="stage stage-${escapeHtml(view.stage)}"><h4>${escapeHtml(view.stage)}</h4>${stageBody(view)}</li>`;
}

function stageBody(view: StageView): string {
  const data = view.data as Record<string, unknown>;
  switch (view.stage) {
    case "retrieval":
      return renderScores((data.scores ?? []) as ScoredRule[]);
    case "inference":
      return renderPlan(data.plan as Plan, String(data.backend ?? ""));
    case "safeguard":
      return renderSafeguards(data.report as SafeguardReport);
    case "judge_pre":
    case "judge_post":
      return renderVerdict(data.verdict as JudgeVerdict);
    case "dispatch":
      return renderDispatch((data.entries ?? []) as DispatchEntry[]);
    default:
      return `<pre>${escapeHtml(JSON.stringify(data))}</pre>`;
  }
}

function renderScores(scores: ScoredRule[]): string {
  const rows = scores
    .map(
      (s) =>
        `<tr><td><code>${escapeHtml(s.id)}</code></td><td>${escapeHtml(s.text)}</td>` +
        `<td>${s.combined.toFixed(4)}</td></tr>`,
    )
    .join("");
  return `<table class="scores"><thead><tr><th>rule</th><th>text</th><th>score</th></tr></thead><tbody>${rows}</tbody></table>`;
}

function renderPlan(plan: Plan | undefined, backend: string): string {
  if (!plan) return `<p class="empty">no plan</p>`;
  const actions = plan.actions
    .map((a) => `<li><code>${escapeHtml(a.agent)}</code> → <code>${escapeHtml(a.command)}</code></li>`)
    .join("");
  return (
    `<ol class="plan">${actions}</ol>` +
    `<p class="reason">${escapeHtml(plan.reason)}</p>` +
    (backend ? `<p class="backend">${escapeHtml(backend)}</p>` : "")
  );
}

function renderSafeguards(report: SafeguardReport | undefined): string {
  if (!report) return "";
  if (report.passed && report.warnings.length === 0) {
    return `<p class="ok">all checks passed</p>`;
  }
  const violations = report.violations
    .map(
      (v) =>
        `<li><span class="badge violation">${escapeHtml(v.rule_id)}</span> ${escapeHtml(v.message)}</li>`,
    )
    .join("");
  const warnings = report.warnings
    .map(
      (w) =>
        `<li><span class="badge warning">${escapeHtml(w.rule_id)}</span> ${escapeHtml(w.message)}</li>`,
    )
    .join("");
  const passed = report.passed
    ? `<p class="ok">passed with warnings</p>`
    : `<p class="bad">blocked</p>`;
  return `${passed}<ul class="findings">${violations}${warnings}</ul>`;
}

function renderVerdict(verdict: JudgeVerdict | undefined): string {
  if (!verdict) return "";
  const ok = verdict.verdict === "success";
  const concur =
    verdict.phase === "post" && verdict.deterministic_concur !== undefined
      ? ` <span class="concur">telemetry ${verdict.deterministic_concur ? "concurs" : "disagrees"}</span>`
      : "";
  return (
    `<p class="verdict ${ok ? "ok" : "bad"}">${escapeHtml(verdict.verdict)}${concur}</p>` +
    (verdict.feedback ? `<p class="feedback">${escapeHtml(verdict.feedback)}</p>` : "")
  );
}

function renderDispatch(entries: DispatchEntry[]): string {
  if (entries.length === 0) return `<p class="empty">nothing dispatched</p>`;
  const rows = entries
    .map((e) => {
      const done = e.complete_time !== null;
      return (
        `<li class="${done ? "ok" : "bad"}"><code>${escapeHtml(e.agent)}</code> ` +
        `${escapeHtml(e.command)} — ${done ? "complete" : "incomplete"}</li>`
      );
    })
    .join("");
  return `<ol class="dispatch">${rows}</ol>`;
}

function shortName(name: string): string {
  return name.replace("FRAME_", "");
}
