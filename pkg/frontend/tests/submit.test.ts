import { describe, expect, it } from "vitest";

import { ApiError, postFeedback } from "../src/api.js";
import { submitFeedback } from "../src/submit.js";
import type { FeedbackAck } from "../src/types.js";

function fixture() {
  return {
    button: { disabled: false },
    ackLine: { textContent: "" as string | null, className: "" },
  };
}

const OVERRIDE = { patient_id: "dev0001", override_p: 0.6, weight: 1 };

describe("submitFeedback", () => {
  it("issues exactly one POST for a double click", async () => {
    const { button, ackLine } = fixture();
    let calls = 0;
    let release!: (ack: FeedbackAck) => void;
    const post: typeof postFeedback = () => {
      calls += 1;
      return new Promise<FeedbackAck>((resolve) => {
        release = resolve;
      });
    };

    const first = submitFeedback("", button, ackLine, OVERRIDE, post);
    // Disabled synchronously, before the request resolves.
    expect(button.disabled).toBe(true);
    await submitFeedback("", button, ackLine, OVERRIDE, post);
    expect(calls).toBe(1);

    release({ status: "accepted", kind: "override", pending: 1, state_version: 3 });
    await first;
    expect(calls).toBe(1);
    expect(button.disabled).toBe(false);
  });

  it("renders nothing but the pending marker until the ack arrives", async () => {
    const { button, ackLine } = fixture();
    let release!: (ack: FeedbackAck) => void;
    const post: typeof postFeedback = () =>
      new Promise<FeedbackAck>((resolve) => {
        release = resolve;
      });

    const pending = submitFeedback("", button, ackLine, OVERRIDE, post);
    expect(ackLine.textContent).toBe("sending...");
    expect(ackLine.className).toBe("");

    release({ status: "accepted", kind: "override", pending: 2, state_version: 9 });
    await pending;
    expect(ackLine.className).toBe("ok");
    expect(ackLine.textContent).toContain("override accepted");
    expect(ackLine.textContent).toContain("pending 2");
  });

  it("shows the server's error and re-arms the button", async () => {
    const { button, ackLine } = fixture();
    const post: typeof postFeedback = () =>
      Promise.reject(new ApiError(404, "UnknownReferenceError", "unknown patient 'ghost'"));

    await submitFeedback("", button, ackLine, { patient_id: "ghost", override_p: 0.5 }, post);
    expect(button.disabled).toBe(false);
    expect(ackLine.className).toBe("error");
    expect(ackLine.textContent).toContain("UnknownReferenceError");
    expect(ackLine.textContent).toContain("ghost");
  });

  it("describes an outcome ack with its consequences", async () => {
    const { button, ackLine } = fixture();
    const post: typeof postFeedback = () =>
      Promise.resolve({
        status: "accepted",
        kind: "outcome",
        anomaly: true,
        queued: true,
        fine_tuned: true,
        model_version: 2,
        state_version: 40,
      });

    await submitFeedback("", button, ackLine, { patient_id: "dev0001", t_ms: 4500, outcome: 0 }, post);
    expect(ackLine.className).toBe("ok");
    expect(ackLine.textContent).toContain("anomaly flagged");
    expect(ackLine.textContent).toContain("fine-tuned to v2");
  });
});
