/**
 * Server-sent events over fetch.
 *
 * The browser's EventSource would do, but a hand-rolled reader keeps the
 * parser testable outside a browser and gives us explicit control over
 * reconnect timing. The server emits only `data:` lines, comment lines
 * as keep-alives, and a blank line per event, so the parser covers that
 * subset of the SSE grammar (plus CRLF, multi-line data, and chunks that
 * split mid-line).
 */

import type { StreamStatus } from "./types.js";

export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];

  /** Feed one transport chunk; returns the payloads of completed events. */
  feed(chunk: string): string[] {
    this.buffer += chunk;
    const out: string[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);

      if (line === "") {
        if (this.dataLines.length > 0) {
          out.push(this.dataLines.join("\n"));
          this.dataLines = [];
        }
        continue;
      }
      if (line.startsWith(":")) continue; // keep-alive comment
      if (line.startsWith("data:")) {
        // Per the SSE grammar a single space after the colon is eaten.
        let value = line.slice(5);
        if (value.startsWith(" ")) value = value.slice(1);
        this.dataLines.push(value);
      }
      // Other field names (event:, id:, retry:) are not emitted by our
      // server; ignore them rather than guessing at semantics.
    }
    return out;
  }

  reset(): void {
    this.buffer = "";
    this.dataLines = [];
  }
}

export interface StreamOptions {
  onEvent: (payload: string) => void;
  onStatus?: (status: StreamStatus) => void;
  /** Initial reconnect delay in ms; doubles up to 16x. */
  retryMs?: number;
  fetchImpl?: typeof fetch;
}

export interface StreamHandle {
  close(): void;
}

/**
 * Connect and keep reconnecting until closed. Each successful
 * connection resets the backoff. The server resends a snapshot of the
 * latest event per patient on every connect, so the consumer has to
 * deduplicate; see the store.
 */
export function connectStream(url: string, options: StreamOptions): StreamHandle {
  const fetchImpl = options.fetchImpl ?? fetch;
  const baseDelay = options.retryMs ?? 500;
  let closed = false;
  let attempt = 0;
  let controller: AbortController | null = null;

  const status = (s: StreamStatus) => options.onStatus?.(s);

  const run = async () => {
    while (!closed) {
      const parser = new SseParser();
      controller = new AbortController();
      try {
        status(attempt === 0 ? "connecting" : "retrying");
        const response = await fetchImpl(url, {
          signal: controller.signal,
          headers: { accept: "text/event-stream" },
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream responded ${response.status}`);
        }
        status("open");
        attempt = 0;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const payload of parser.feed(decoder.decode(value, { stream: true }))) {
            options.onEvent(payload);
          }
        }
      } catch (err) {
        if (closed) break;
      }
      if (closed) break;
      attempt += 1;
      const delay = Math.min(baseDelay * 2 ** Math.min(attempt - 1, 4), baseDelay * 16);
      status("retrying");
      await new Promise((resolve) => setTimeout(resolve, delay));
    }
    status("closed");
  };

  void run();

  return {
    close() {
      closed = true;
      controller?.abort();
    },
  };
}
