import { afterEach, describe, expect, it } from "vitest";
import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";

import { ApiError, ConsoleClient, openEventStream } from "../src/client.js";
import type { StreamEvent } from "../src/types.js";

interface Stub {
  server: Server;
  url: string;
  requests: { method: string; path: string; body: string }[];
  close(): Promise<void>;
}

type Handler = (req: { method: string; path: string; body: string }, res: import("node:http").ServerResponse) => void;

async function startStub(handler: Handler): Promise<Stub> {
  const requests: Stub["requests"] = [];
  const server = createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => {
      const entry = {
        method: req.method ?? "",
        path: req.url ?? "",
        body: Buffer.concat(chunks).toString("utf-8"),
      };
      requests.push(entry);
      handler(entry, res);
    });
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const { port } = server.address() as AddressInfo;
  return {
    server,
    url: `http://127.0.0.1:${port}`,
    requests,
    close: () =>
      new Promise((resolve) => {
        server.closeAllConnections();
        server.close(() => resolve());
      }),
  };
}

function json(res: import("node:http").ServerResponse, status: number, body: unknown): void {
  res.writeHead(status, { "content-type": "application/json" });
  res.end(JSON.stringify(body));
}

const stubs: Stub[] = [];
afterEach(async () => {
  while (stubs.length) await stubs.pop()!.close();
});

async function stub(handler: Handler): Promise<Stub> {
  const s = await startStub(handler);
  stubs.push(s);
  return s;
}

describe("ConsoleClient requests", () => {
  it("submits a mission and returns its id", async () => {
    const s = await stub((req, res) => json(res, 202, { mission_id: "m-123" }));
    const client = new ConsoleClient(s.url);
    await expect(client.submitMission("Hold all positions.")).resolves.toBe("m-123");
    expect(s.requests).toHaveLength(1);
    expect(s.requests[0]).toMatchObject({ method: "POST", path: "/missions" });
    expect(JSON.parse(s.requests[0]!.body)).toEqual({ text: "Hold all positions." });
  });

  it("rejects empty input locally without any request", async () => {
    const s = await stub((req, res) => json(res, 202, { mission_id: "m-123" }));
    const client = new ConsoleClient(s.url);
    await expect(client.submitMission("   ")).rejects.toThrow(ApiError);
    expect(s.requests).toHaveLength(0);
  });

  it("surfaces HTTP errors with their status", async () => {
    const s = await stub((req, res) => json(res, 400, { error: "missing text" }));
    const client = new ConsoleClient(s.url);
    const failure = client.submitMission("x");
    await expect(failure).rejects.toThrow(ApiError);
    await failure.catch((err: ApiError) => expect(err.status).toBe(400));
  });

  it("rejects non-JSON responses", async () => {
    const s = await stub((req, res) => {
      res.writeHead(200, { "content-type": "text/html" });
      res.end("<html>hello</html>");
    });
    const client = new ConsoleClient(s.url);
    await expect(client.getState()).rejects.toThrow(/not JSON/);
  });

  it("reports an unreachable orchestrator clearly", async () => {
    const client = new ConsoleClient("http://127.0.0.1:1"); // nothing listens there
    await expect(client.submitMission("x")).rejects.toThrow(/cannot reach orchestrator/);
  });

  it("polls waitTerminal until the mission ends", async () => {
    let calls = 0;
    const s = await stub((req, res) => {
      calls += 1;
      json(res, 200, {
        id: "m-1",
        terminal_state: calls >= 3 ? "completed" : null,
      });
    });
    const client = new ConsoleClient(s.url);
    const record = await client.waitTerminal("m-1", 5_000, 10);
    expect(record.terminal_state).toBe("completed");
    expect(calls).toBe(3);
  });
});

describe("event stream", () => {
  it("delivers frames, resyncs from /state on drop, and reconnects", async () => {
    let streamConnections = 0;
    const s = await stub((req, res) => {
      if (req.path === "/events") {
        streamConnections += 1;
        res.writeHead(200, { "content-type": "application/x-ndjson" });
        if (streamConnections === 1) {
          res.write(`${JSON.stringify({ kind: "queue", event: "submitted", mission_id: "m1", position: 0, ts: 1 })}\n`);
          res.end(); // server drops the stream
        } else {
          res.write(`${JSON.stringify({ kind: "queue", event: "started", mission_id: "m1", position: 0, ts: 2 })}\n`);
          // second connection stays open until the client closes
        }
        return;
      }
      if (req.path === "/state") {
        json(res, 200, {
          snapshot: { version: 5, snapshot_time: 0, assets: {} },
          active_mission: null,
          queue: [],
          connected_devices: [],
        });
        return;
      }
      json(res, 404, { error: "not found" });
    });

    const client = new ConsoleClient(s.url);
    const events: StreamEvent[] = [];
    const statuses: boolean[] = [];
    const handle = openEventStream(client, {
      onEvent: (ev) => events.push(ev),
      onStatus: (connected) => statuses.push(connected),
      reconnectDelayMs: 20,
    });

    await until(() => events.some((e) => e.kind === "queue" && e.event === "started"));
    handle.close();

    expect(streamConnections).toBe(2);
    const kinds = events.map((e) => e.kind);
    // drop -> resync state frame arrives between the two stream generations
    expect(kinds.indexOf("state")).toBeGreaterThan(kinds.indexOf("queue"));
    const stateFrame = events.find((e) => e.kind === "state")!;
    expect(stateFrame).toMatchObject({ kind: "state", snapshot: { version: 5 } });
    expect(s.requests.filter((r) => r.path === "/state")).toHaveLength(1);
    expect(statuses).toContain(true);
    expect(statuses).toContain(false);
    expect(handle.closed).toBe(true);
  });

  it("stops reconnecting once closed", async () => {
    const s = await stub((req, res) => {
      if (req.path === "/events") {
        res.writeHead(200, { "content-type": "application/x-ndjson" });
        res.end(`${JSON.stringify({ kind: "error", detail: "x", ts: 1 })}\n`);
        return;
      }
      json(res, 200, {
        snapshot: { version: 1, snapshot_time: 0, assets: {} },
        active_mission: null,
        queue: [],
        connected_devices: [],
      });
    });
    const client = new ConsoleClient(s.url);
    const events: StreamEvent[] = [];
    const handle = openEventStream(client, {
      onEvent: (ev) => events.push(ev),
      reconnectDelayMs: 10,
    });
    await until(() => events.length >= 1);
    handle.close();
    await sleep(80);
    const after = s.requests.length;
    await sleep(80);
    expect(s.requests.length).toBe(after); // no further polling or reconnects
  });
});

function until(cond: () => boolean, timeoutMs = 5_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const tick = () => {
      if (cond()) return resolve();
      if (Date.now() > deadline) return reject(new Error("condition not met in time"));
      setTimeout(tick, 10);
    };
    tick();
  });
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
