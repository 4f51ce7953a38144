/**
 * End-to-end: the console against the real orchestrator and simulated fleet,
 * both spawned through their actual CLI. Exercises the console acceptance
 * bar: a submitted command's trace reaches a terminal state in the UI, asset
 * movement shows on the map within a second, and killing the console mid-
 * mission never changes the mission's outcome.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ConsoleClient, openEventStream, type StreamHandle } from "../src/client.js";
import {
  applyEvent,
  initialState,
  noteSubmitted,
  type ConsoleState,
} from "../src/state.js";
import { markersFrom } from "../src/map.js";
import { PIPELINE_STAGES, type StreamEvent } from "../src/types.js";

const PYTHON = process.env.PYTHON ?? "python3";
const DRONE = "FRAME_Drone_T02";

let serveProc: ChildProcess;
let fleetProc: ChildProcess;
let client: ConsoleClient;
let stream: StreamHandle;

// console-side state, fed exclusively by the event stream
let state: ConsoleState = initialState();
// wall-clock log of the drone's marker after each applied telemetry event
const markerLog: { wall: number; x: number; y: number; frame: string }[] = [];

function cli(args: string[], extraEnv: Record<string, string> = {}): ChildProcess {
  return spawn(PYTHON, ["-m", "fieldops.cli", ...args], {
    cwd: tmpdir(),
    env: { ...process.env, PYTHONUNBUFFERED: "1", ...extraEnv },
    stdio: ["ignore", "pipe", "pipe"],
  });
}

/** Collect stdout until every pattern has matched; reject if the process dies. */
function awaitPatterns(proc: ChildProcess, patterns: RegExp[], timeoutMs = 30_000): Promise<RegExpMatchArray[]> {
  return new Promise((resolve, reject) => {
    let output = "";
    let errput = "";
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for ${patterns}; stdout:\n${output}\nstderr:\n${errput}`)),
      timeoutMs,
    );
    const check = () => {
      const matches = patterns.map((p) => output.match(p));
      if (matches.every((m) => m !== null)) {
        clearTimeout(timer);
        resolve(matches as RegExpMatchArray[]);
      }
    };
    proc.stdout!.on("data", (chunk: Buffer) => {
      output += chunk.toString();
      check();
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      errput += chunk.toString();
    });
    proc.on("exit", (code) =>
      reject(new Error(`process exited early (${code}); stdout:\n${output}\nstderr:\n${errput}`)),
    );
  });
}

function until(cond: () => boolean, timeoutMs = 25_000, what = "condition"): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const tick = () => {
      if (cond()) return resolve();
      if (Date.now() > deadline) return reject(new Error(`timed out waiting for ${what}`));
      setTimeout(tick, 20);
    };
    tick();
  });
}

function stop(proc: ChildProcess | undefined): Promise<void> {
  return new Promise((resolve) => {
    if (!proc || proc.exitCode !== null) return resolve();
    proc.on("exit", () => resolve());
    proc.kill("SIGTERM");
    setTimeout(() => proc.kill("SIGKILL"), 5_000).unref();
  });
}

beforeAll(async () => {
  const logDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  serveProc = cli([
    "serve",
    "--device-port", "0",
    "--api-port", "0",
    "--log-dir", logDir,
    "--script", "compliant",
  ]);
  const [device, api] = await awaitPatterns(serveProc, [
    /device protocol on [^:]+:(\d+)/,
    /operator API on http:\/\/[^:]+:(\d+)/,
  ]);
  const devicePort = device![1]!;
  client = new ConsoleClient(`http://127.0.0.1:${api![1]!}`);

  fleetProc = cli(["simnet", "run", "--host", "127.0.0.1", "--port", devicePort, "--control-port", "0"]);
  await awaitPatterns(fleetProc, [/4 assets connected/]);

  stream = openEventStream(client, {
    onEvent: (event: StreamEvent) => {
      state = applyEvent(state, event);
      if (event.kind === "telemetry" && event.name === DRONE) {
        const marker = markersFrom(state.assets).find((m) => m.name === DRONE);
        if (marker) {
          markerLog.push({ wall: Date.now(), x: marker.worldX, y: marker.worldY, frame: marker.frame });
        }
      }
    },
  });
  await until(() => state.snapshotVersion >= 0 && Object.keys(state.assets).length === 4,
    30_000, "all four assets in the opening state frame");
});

afterAll(async () => {
  stream?.close();
  await stop(fleetProc);
  await stop(serveProc);
});

describe("operator console against the live stack", () => {
  it("shows a submitted command's full trace through to its terminal state", async () => {
    const text = "Hold all positions.";
    const missionId = await client.submitMission(text);
    state = noteSubmitted(state, missionId, text);

    await until(() => state.traces[missionId]?.terminal !== null && state.traces[missionId] !== undefined,
      25_000, "terminal event in the console state");

    const trace = state.traces[missionId]!;
    expect(trace.command).toBe(text);
    expect(trace.stages.map((s) => s.stage)).toEqual([...PIPELINE_STAGES]);
    expect(trace.terminal!.terminal_state).toBe("completed");
    expect(trace.terminal!.hybrid_success).toBe(true);
    expect(state.history.some((h) => h.missionId === missionId)).toBe(true);
    expect(state.activeMission).toBeNull();

    // the retrieval stage carried real scored rules, straight off the wire
    const retrieval = trace.stages[0]!;
    const scores = (retrieval.data as { scores: { id: string; combined: number }[] }).scores;
    expect(scores).toHaveLength(3);
    for (const s of scores) expect(s.combined).toBeGreaterThan(0);
  });

  it("moves the drone's map marker with sub-second telemetry latency", async () => {
    const start = { ...state.assets[DRONE]! };
    expect(start.frame).toBe("FRAME_NorthGate");

    markerLog.length = 0;
    const missionId = await client.submitMission("Move the drone to the east gate.");
    state = noteSubmitted(state, missionId, "Move the drone to the east gate.");
    await until(() => state.traces[missionId]?.terminal != null, 25_000, "move mission terminal");

    expect(state.traces[missionId]!.terminal!.terminal_state).toBe("completed");
    const done = state.assets[DRONE]!;
    expect(done.frame).toBe("FRAME_EastGate");
    expect(done.x).not.toBe(start.x);

    // marker positions are the streamed coordinates, nothing interpolated
    const transits = markerLog.filter((m) => m.frame === "in_transit");
    expect(transits.length).toBeGreaterThan(2);
    const positions = new Set(transits.map((m) => `${m.x},${m.y}`));
    expect(positions.size).toBeGreaterThan(1);

    // every map refresh during the flight landed within a second of the last
    let worstGap = 0;
    for (let i = 1; i < transits.length; i += 1) {
      worstGap = Math.max(worstGap, transits[i]!.wall - transits[i - 1]!.wall);
    }
    expect(worstGap).toBeLessThan(1_000);
  });

  it("keeps the mission's outcome when the console dies mid-flight", async () => {
    const text = "An unknown vehicle is approaching the west gate.";
    const missionId = await client.submitMission(text);
    state = noteSubmitted(state, missionId, text);

    // wait until the pipeline is demonstrably running, then kill the console
    await until(() => (state.traces[missionId]?.stages.length ?? 0) >= 1,
      25_000, "first stage event");
    stream.close();
    const frozen = state.traces[missionId]!;
    expect(frozen.terminal).toBeNull(); // console died before the outcome

    // a fresh client (the operator reopening the page) sees the finished
    // mission: execution never depended on the console being alive
    const fresh = new ConsoleClient(client.baseUrl);
    const record = await fresh.waitTerminal(missionId, 25_000);
    expect(record.terminal_state).toBe("completed");
    expect(record.hybrid_success).toBe(true);
    expect(record.command_text).toBe(text);
    // and the console state, long dead, still holds only what it saw
    expect(state.traces[missionId]!.terminal).toBeNull();
  });
});
