/**
 * Incremental newline-delimited JSON decoder.
 *
 * Network reads hand over arbitrary byte chunks; a line is only parseable
 * once its trailing newline has arrived. Blank lines are skipped, and a
 * malformed line is surfaced as an error value rather than thrown so one bad
 * frame cannot kill the stream.
 */

export type NdjsonResult =
  | { ok: true; value: unknown }
  | { ok: false; line: string; error: string };

export class NdjsonBuffer {
  private pending = "";

  /** Feed a decoded text chunk; returns every complete line's parse result. */
  feed(chunk: string): NdjsonResult[] {
    this.pending += chunk;
    const out: NdjsonResult[] = [];
    let idx: number;
    while ((idx = this.pending.indexOf("\n")) >= 0) {
      const line = this.pending.slice(0, idx).replace(/\r$/, "");
      this.pending = this.pending.slice(idx + 1);
      if (line.trim() === "") continue;
      try {
        out.push({ ok: true, value: JSON.parse(line) });
      } catch (err) {
        out.push({ ok: false, line, error: String(err) });
      }
    }
    return out;
  }

  /** Unconsumed partial line (no newline seen yet). */
  get buffered(): string {
    return this.pending;
  }
}
