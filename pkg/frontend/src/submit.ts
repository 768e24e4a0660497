// Feedback submission with a single-flight guard. Kept free of DOM
// lookups so the double-click guarantee is testable with plain objects.

import { ApiError, postFeedback } from "./api.js";
import { describeAck } from "./render.js";
import type { Feedback } from "./types.js";

/** The slice of a button this module needs; HTMLButtonElement fits. */
export interface SubmitTarget {
  disabled: boolean;
}

/** The slice of the acknowledgment line; any HTMLElement fits. */
export interface AckSink {
  textContent: string | null;
  className: string;
}

/**
 * Send one feedback document and render nothing but the server's
 * answer. The button is disabled synchronously, before the request is
 * even built, so a double click issues exactly one POST; the line under
 * the form only ever shows "sending...", the acknowledgment, or the
 * error, never a locally invented result.
 */
export async function submitFeedback(
  base: string,
  button: SubmitTarget,
  ackLine: AckSink,
  feedback: Feedback,
  post: typeof postFeedback = postFeedback,
): Promise<void> {
  if (button.disabled) return;
  button.disabled = true;
  ackLine.textContent = "sending...";
  ackLine.className = "";
  try {
    const ack = await post(base, feedback);
    ackLine.textContent = describeAck(ack);
    ackLine.className = "ok";
  } catch (err) {
    ackLine.textContent = err instanceof ApiError ? `${err.kind}: ${err.message}` : String(err);
    ackLine.className = "error";
  } finally {
    button.disabled = false;
  }
}
