/**
 * HTTP client for the orchestrator operator API.
 *
 * The console is strictly a client: every rendered datum originates from one
 * of these calls or from the event stream. No endpoint beyond the published
 * five is used.
 */

import { NdjsonBuffer } from "./ndjson.js";
import type { MissionRecord, StateEvent, StreamEvent } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status?: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = typeof fetch;

export class ConsoleClient {
  readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  /** POST /missions; empty input is rejected locally without a request. */
  async submitMission(text: string): Promise<string> {
    if (text.trim() === "") {
      throw new ApiError("command text is empty");
    }
    const body = await this.request("POST", "/missions", { text });
    const id = (body as { mission_id?: unknown }).mission_id;
    if (typeof id !== "string") {
      throw new ApiError("malformed submit response: no mission_id");
    }
    return id;
  }

  async getState(): Promise<Omit<StateEvent, "kind">> {
    return (await this.request("GET", "/state")) as Omit<StateEvent, "kind">;
  }

  async getMission(id: string): Promise<MissionRecord> {
    return (await this.request("GET", `/missions/${id}`)) as MissionRecord;
  }

  async getRules(): Promise<{ rules: unknown[] }> {
    return (await this.request("GET", "/rules")) as { rules: unknown[] };
  }

  /** GET /missions/<id> repeatedly until the mission reaches a terminal state. */
  async waitTerminal(id: string, timeoutMs = 60_000, pollMs = 150): Promise<MissionRecord> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const record = await this.getMission(id);
      if (record.terminal_state !== null) return record;
      if (Date.now() > deadline) {
        throw new ApiError(`mission ${id} not terminal after ${timeoutMs}ms`);
      }
      await sleep(pollMs);
    }
  }

  eventsUrl(): string {
    return `${this.baseUrl}/events`;
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`cannot reach orchestrator at ${this.baseUrl}: ${String(err)}`);
    }
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(
        `${method} ${path} failed: ${response.status} ${text.slice(0, 200)}`,
        response.status,
      );
    }
    try {
      return JSON.parse(text);
    } catch {
      throw new ApiError(`${method} ${path}: response is not JSON`);
    }
  }
}

// ------------------------------------------------------------ event stream

export interface StreamOptions {
  onEvent: (event: StreamEvent) => void;
  /** Connection state changes, for the banner. */
  onStatus?: (connected: boolean, detail: string) => void;
  reconnectDelayMs?: number;
}

export interface StreamHandle {
  close(): void;
  readonly closed: boolean;
}

/**
 * Subscribe to GET /events with automatic reconnect.
 *
 * On disconnect the client first resyncs from GET /state (delivered to the
 * reducer as a synthetic state frame, so the view can never show stale
 * between-streams data), then reopens the stream. close() stops everything.
 */
export function openEventStream(client: ConsoleClient, options: StreamOptions): StreamHandle {
  const delayMs = options.reconnectDelayMs ?? 500;
  let closed = false;
  let controller: AbortController | null = null;

  const notify = (connected: boolean, detail: string) => {
    if (!closed) options.onStatus?.(connected, detail);
  };

  const run = async () => {
    let firstAttempt = true;
    while (!closed) {
      if (!firstAttempt) {
        try {
          const state = await client.getState();
          if (closed) return;
          options.onEvent({ kind: "state", ...state });
        } catch {
          // orchestrator still down; the retry delay below applies
        }
      }
      firstAttempt = false;
      controller = new AbortController();
      try {
        const response = await fetch(client.eventsUrl(), { signal: controller.signal });
        if (!response.ok || response.body === null) {
          throw new ApiError(`event stream: ${response.status}`);
        }
        notify(true, "live");
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const buffer = new NdjsonBuffer();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const result of buffer.feed(decoder.decode(value, { stream: true }))) {
            if (result.ok) {
              options.onEvent(result.value as StreamEvent);
            }
          }
        }
        notify(false, "stream ended");
      } catch (err) {
        if (closed) return;
        notify(false, String(err));
      }
      if (closed) return;
      await sleep(delayMs);
    }
  };
  void run();

  return {
    get closed() {
      return closed;
    },
    close() {
      closed = true;
      controller?.abort();
    },
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
