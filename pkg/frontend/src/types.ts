/**
 * Wire types for the orchestrator operator API.
 *
 * Everything here mirrors what the server actually sends; the console never
 * invents fields. `GET /events` is newline-delimited JSON whose first line is
 * always a full state frame.
 */

/** One asset inside a telemetry snapshot. */
export interface AssetRecord {
  name: string;
  kind: string;
  frame: string;
  x: number;
  y: number;
  status: string;
  battery: number;
  task: string | null;
  last_update: number;
}

/** Versioned world view; versions only ever grow. */
export interface Snapshot {
  version: number;
  snapshot_time: number;
  assets: Record<string, AssetRecord>;
}

export interface ScoredRule {
  id: string;
  domain: string;
  priority: string;
  text: string;
  seq_score: number;
  jaccard_score: number;
  combined: number;
}

export interface PlanAction {
  agent: string;
  command: string;
}

export interface Plan {
  actions: PlanAction[];
  reason: string;
}

export interface RuleViolation {
  rule_id: string;
  message: string;
}

export interface SafeguardReport {
  passed: boolean;
  violations: RuleViolation[];
  warnings: RuleViolation[];
}

export interface JudgeVerdict {
  verdict: "success" | "failure";
  feedback: string;
  phase: "pre" | "post";
  /** post phase only: did the model agree with the telemetry check */
  deterministic_concur?: boolean;
}

export interface DispatchEntry {
  agent: string;
  command: string;
  action_index: number;
  sent_time: number | null;
  ack_time: number | null;
  complete_time: number | null;
}

export interface LatencyBreakdown {
  retrieval_ms: number;
  inference_ms: number;
  judge_ms: number;
  dispatch_ms: number;
  total_ms: number;
}

/** Full mission record as returned by GET /missions/<id>. */
export interface MissionRecord {
  id: string;
  command_text: string;
  source: string;
  received_at: number;
  started_at: number | null;
  finished_at: number | null;
  retrieved_rule_ids: string[];
  retrieved_scores: ScoredRule[];
  decision_prompt: string;
  raw_response: string;
  backend_label: string;
  plan: Plan | null;
  reference_errors: string[];
  safeguard_report: SafeguardReport | null;
  pre_verdict: JudgeVerdict | null;
  post_verdict: JudgeVerdict | null;
  dispatch_log: DispatchEntry[];
  start_covered_gates: string[];
  final_snapshot_version: number | null;
  hybrid_success: boolean;
  strict_success: boolean;
  latency: LatencyBreakdown;
  terminal_state: string | null;
  error: string;
}

/** Pipeline stages in execution order; traces must render in this order. */
export const PIPELINE_STAGES = [
  "retrieval",
  "inference",
  "safeguard",
  "judge_pre",
  "dispatch",
  "judge_post",
] as const;

export type StageName = (typeof PIPELINE_STAGES)[number];

export type StageData =
  | { scores: ScoredRule[] }
  | { plan: Plan; backend: string }
  | { report: SafeguardReport }
  | { verdict: JudgeVerdict }
  | { entries: DispatchEntry[] };

// ---------------------------------------------------------------- stream

export interface StateEvent {
  kind: "state";
  snapshot: Snapshot;
  active_mission: string | null;
  queue: string[];
  connected_devices: string[];
  ts?: number;
}

export interface QueueEvent {
  kind: "queue";
  event: "submitted" | "started";
  mission_id: string;
  position: number;
  ts: number;
}

export interface StageEvent {
  kind: "stage";
  mission_id: string;
  stage: StageName;
  data: StageData;
  ts: number;
}

export interface TerminalEvent {
  kind: "terminal";
  mission_id: string;
  terminal_state: string;
  hybrid_success: boolean;
  strict_success: boolean;
  error: string;
  ts: number;
}

export interface TelemetryEvent {
  kind: "telemetry";
  version: number;
  name: string;
  frame: string;
  x: number;
  y: number;
  status: string;
  battery: number;
  ts: number;
}

export interface RegisterEvent {
  kind: "register";
  name: string;
  device_kind: string;
  frame: string;
  ts: number;
}

export interface DeviceEventEvent {
  kind: "device_event";
  event: string;
  name: string;
  frame: string;
  mission_text: string;
  ts: number;
}

export interface DeviceGoneEvent {
  kind: "device_gone";
  name: string;
  ts: number;
}

export interface ErrorEvent {
  kind: "error";
  detail: string;
  ts: number;
}

export type StreamEvent =
  | StateEvent
  | QueueEvent
  | StageEvent
  | TerminalEvent
  | TelemetryEvent
  | RegisterEvent
  | DeviceEventEvent
  | DeviceGoneEvent
  | ErrorEvent;

export function stageIndex(stage: string): number {
  return PIPELINE_STAGES.indexOf(stage as StageName);
}
