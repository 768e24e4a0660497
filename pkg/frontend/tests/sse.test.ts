import { describe, expect, it } from "vitest";

import { SseParser, connectStream } from "../src/sse.js";

describe("SseParser", () => {
  it("yields one payload per blank-line-terminated event", () => {
    const parser = new SseParser();
    const got = parser.feed('data: {"a":1}\n\ndata: {"b":2}\n\n');
    expect(got).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("reassembles chunks that split mid-line and mid-event", () => {
    const parser = new SseParser();
    expect(parser.feed("da")).toEqual([]);
    expect(parser.feed("ta: hel")).toEqual([]);
    expect(parser.feed("lo\n")).toEqual([]);
    expect(parser.feed("\n")).toEqual(["hello"]);
  });

  it("drops keep-alive comments without ending an event", () => {
    const parser = new SseParser();
    expect(parser.feed(": keep-alive\n\n")).toEqual([]);
    expect(parser.feed("data: x\n: mid-event comment\n\n")).toEqual(["x"]);
  });

  it("joins multi-line data with newlines", () => {
    const parser = new SseParser();
    expect(parser.feed("data: line1\ndata: line2\n\n")).toEqual(["line1\nline2"]);
  });

  it("handles CRLF line endings", () => {
    const parser = new SseParser();
    expect(parser.feed("data: x\r\n\r\n")).toEqual(["x"]);
  });

  it("eats exactly one space after the colon", () => {
    const parser = new SseParser();
    expect(parser.feed("data:  two spaces\n\n")).toEqual([" two spaces"]);
    expect(parser.feed("data:none\n\n")).toEqual(["none"]);
  });

  it("ignores unknown field names", () => {
    const parser = new SseParser();
    expect(parser.feed("event: tick\nid: 7\ndata: y\n\n")).toEqual(["y"]);
  });
});

function streamResponse(chunks: string[]): Response {
  const encoder = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const chunk of chunks) controller.enqueue(encoder.encode(chunk));
      controller.close();
    },
  });
  return new Response(body, { status: 200, headers: { "content-type": "text/event-stream" } });
}

describe("connectStream", () => {
  it("delivers events and reconnects when the stream ends", async () => {
    let calls = 0;
    const fetchImpl = (async () => {
      calls += 1;
      if (calls === 1) return streamResponse(["data: a\n\n", "data: b\n\n"]);
      return streamResponse(["data: c\n\n"]);
    }) as typeof fetch;

    const seen: string[] = [];
    const statuses: string[] = [];
    const handle = connectStream("http://ignored/stream", {
      onEvent: (payload) => seen.push(payload),
      onStatus: (status) => statuses.push(status),
      retryMs: 5,
      fetchImpl,
    });
    await new Promise((resolve) => setTimeout(resolve, 60));
    handle.close();
    await new Promise((resolve) => setTimeout(resolve, 20));

    expect(seen.slice(0, 3)).toEqual(["a", "b", "c"]);
    expect(calls).toBeGreaterThanOrEqual(2);
    expect(statuses[0]).toBe("connecting");
    expect(statuses).toContain("open");
    expect(statuses[statuses.length - 1]).toBe("closed");
  });

  it("stops fetching after close", async () => {
    let calls = 0;
    const fetchImpl = (async () => {
      calls += 1;
      return streamResponse(["data: only\n\n"]);
    }) as typeof fetch;

    const handle = connectStream("http://ignored/stream", {
      onEvent: () => {},
      retryMs: 5,
      fetchImpl,
    });
    await new Promise((resolve) => setTimeout(resolve, 25));
    handle.close();
    const at = calls;
    await new Promise((resolve) => setTimeout(resolve, 40));
    expect(calls).toBe(at);
  });
});
