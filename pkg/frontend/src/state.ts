/**
 * Console view state and its reducer.
 *
 * The reducer is pure: every field in ConsoleState is copied verbatim from an
 * API response or stream event (plus submission echoes from this console's
 * own POSTs). Two invariants hold by construction:
 *
 *  - the snapshot version never regresses: stale telemetry and stale state
 *    frames are dropped rather than applied;
 *  - a mission trace always lists its stages in pipeline order, whatever
 *    order frames arrive in.
 */

import type {
  AssetRecord,
  StageData,
  StreamEvent,
  TerminalEvent,
} from "./types.js";
import { stageIndex } from "./types.js";

export interface StageView {
  stage: string;
  data: StageData;
  ts: number;
}

export interface MissionTrace {
  missionId: string;
  /** Command text; known immediately for local submissions, else on detail fetch. */
  command: string | null;
  stages: StageView[];
  terminal: TerminalEvent | null;
  queuedPosition: number | null;
}

export interface MissionSummary {
  missionId: string;
  command: string | null;
  terminalState: string;
  hybridSuccess: boolean;
  strictSuccess: boolean;
  error: string;
  ts: number;
}

export interface DeviceAlert {
  event: string;
  name: string;
  frame: string;
  missionText: string;
  ts: number;
}

export interface ConsoleState {
  connected: boolean;
  statusDetail: string;
  snapshotVersion: number;
  assets: Record<string, AssetRecord>;
  devices: string[];
  activeMission: string | null;
  queue: string[];
  traces: Record<string, MissionTrace>;
  /** Mission ids in first-seen order; render newest last. */
  traceOrder: string[];
  history: MissionSummary[];
  deviceAlerts: DeviceAlert[];
  banner: string | null;
}

const MAX_TRACES = 50;
const MAX_HISTORY = 200;
const MAX_ALERTS = 25;

export function initialState(): ConsoleState {
  return {
    connected: false,
    statusDetail: "connecting",
    snapshotVersion: -1,
    assets: {},
    devices: [],
    activeMission: null,
    queue: [],
    traces: {},
    traceOrder: [],
    history: [],
    deviceAlerts: [],
    banner: null,
  };
}

/** Record this console's own POST so the trace panel can label it at once. */
export function noteSubmitted(state: ConsoleState, missionId: string, text: string): ConsoleState {
  const next = withTrace(state, missionId);
  next.traces[missionId] = { ...next.traces[missionId]!, command: text };
  return next;
}

export function setConnection(state: ConsoleState, connected: boolean, detail: string): ConsoleState {
  return { ...state, connected, statusDetail: detail };
}

export function setBanner(state: ConsoleState, banner: string | null): ConsoleState {
  return { ...state, banner };
}

export function applyEvent(state: ConsoleState, event: StreamEvent): ConsoleState {
  switch (event.kind) {
    case "state": {
      const next = { ...state };
      // unversioned views always follow the server
      next.activeMission = event.active_mission;
      next.queue = [...event.queue];
      next.devices = [...event.connected_devices];
      if (event.snapshot.version >= state.snapshotVersion) {
        next.snapshotVersion = event.snapshot.version;
        next.assets = { ...event.snapshot.assets };
      }
      return next;
    }

    case "telemetry": {
      if (event.version <= state.snapshotVersion) return state; // stale
      const previous = state.assets[event.name];
      const updated: AssetRecord = {
        name: event.name,
        kind: previous?.kind ?? "",
        frame: event.frame,
        x: event.x,
        y: event.y,
        status: event.status,
        battery: event.battery,
        task: previous?.task ?? null,
        last_update: event.ts,
      };
      return {
        ...state,
        snapshotVersion: event.version,
        assets: { ...state.assets, [event.name]: updated },
      };
    }

    case "register": {
      const devices = state.devices.includes(event.name)
        ? state.devices
        : [...state.devices, event.name].sort();
      return { ...state, devices };
    }

    case "device_gone": {
      const devices = state.devices.filter((d) => d !== event.name);
      const asset = state.assets[event.name];
      const assets = asset
        ? { ...state.assets, [event.name]: { ...asset, status: "unavailable" } }
        : state.assets;
      return { ...state, devices, assets };
    }

    case "device_event": {
      const alert: DeviceAlert = {
        event: event.event,
        name: event.name,
        frame: event.frame,
        missionText: event.mission_text,
        ts: event.ts,
      };
      const deviceAlerts = [...state.deviceAlerts, alert].slice(-MAX_ALERTS);
      return { ...state, deviceAlerts };
    }

    case "queue": {
      const next = withTrace(state, event.mission_id);
      const trace = next.traces[event.mission_id]!;
      if (event.event === "started") {
        next.activeMission = event.mission_id;
        next.queue = next.queue.filter((id) => id !== event.mission_id);
        next.traces[event.mission_id] = { ...trace, queuedPosition: null };
      } else {
        next.traces[event.mission_id] = { ...trace, queuedPosition: event.position };
        if (event.position > 0 && !next.queue.includes(event.mission_id)) {
          next.queue = [...next.queue, event.mission_id];
        }
      }
      return next;
    }

    case "stage": {
      const next = withTrace(state, event.mission_id);
      const trace = next.traces[event.mission_id]!;
      const view: StageView = { stage: event.stage, data: event.data, ts: event.ts };
      const stages = trace.stages.filter((s) => s.stage !== event.stage);
      stages.push(view);
      stages.sort((a, b) => stageIndex(a.stage) - stageIndex(b.stage));
      next.traces[event.mission_id] = { ...trace, stages };
      return next;
    }

    case "terminal": {
      const next = withTrace(state, event.mission_id);
      const trace = next.traces[event.mission_id]!;
      next.traces[event.mission_id] = { ...trace, terminal: event };
      if (next.activeMission === event.mission_id) next.activeMission = null;
      next.queue = next.queue.filter((id) => id !== event.mission_id);
      const summary: MissionSummary = {
        missionId: event.mission_id,
        command: trace.command,
        terminalState: event.terminal_state,
        hybridSuccess: event.hybrid_success,
        strictSuccess: event.strict_success,
        error: event.error,
        ts: event.ts,
      };
      next.history = [...next.history, summary].slice(-MAX_HISTORY);
      return next;
    }

    case "error": {
      return { ...state, banner: event.detail };
    }

    default:
      return state;
  }
}

/** The trace currently worth showing: active mission, else newest known. */
export function focusedTrace(state: ConsoleState): MissionTrace | null {
  if (state.activeMission !== null) {
    const active = state.traces[state.activeMission];
    if (active) return active;
  }
  const lastId = state.traceOrder[state.traceOrder.length - 1];
  return lastId === undefined ? null : (state.traces[lastId] ?? null);
}

function withTrace(state: ConsoleState, missionId: string): ConsoleState {
  const next = {
    ...state,
    traces: { ...state.traces },
    traceOrder: [...state.traceOrder],
    queue: [...state.queue],
  };
  if (!next.traces[missionId]) {
    next.traces[missionId] = {
      missionId,
      command: null,
      stages: [],
      terminal: null,
      queuedPosition: null,
    };
    next.traceOrder.push(missionId);
    if (next.traceOrder.length > MAX_TRACES) {
      const evicted = next.traceOrder.shift()!;
      delete next.traces[evicted];
    }
  }
  return next;
}
