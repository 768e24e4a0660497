// Thin JSON client for the three request/response endpoints.

import type { Feedback, FeedbackAck, PatientSummary, TwinSnapshot } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function asError(response: Response): Promise<ApiError> {
  let kind = "unknown";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { error?: string; type?: string };
    if (body.error) message = body.error;
    if (body.type) kind = body.type;
  } catch {
    // Non-JSON error body; keep the generic message.
  }
  return new ApiError(response.status, kind, message);
}

async function getJson<T>(url: string, fetchImpl: typeof fetch): Promise<T> {
  const response = await fetchImpl(url, { headers: { accept: "application/json" } });
  if (!response.ok) throw await asError(response);
  return (await response.json()) as T;
}

export function fetchPatients(base: string, fetchImpl: typeof fetch = fetch): Promise<PatientSummary[]> {
  return getJson<PatientSummary[]>(`${base}/patients`, fetchImpl);
}

export function fetchTwin(base: string, patientId: string, fetchImpl: typeof fetch = fetch): Promise<TwinSnapshot> {
  return getJson<TwinSnapshot>(`${base}/patients/${encodeURIComponent(patientId)}/twin`, fetchImpl);
}

export async function postFeedback(
  base: string,
  feedback: Feedback,
  fetchImpl: typeof fetch = fetch,
): Promise<FeedbackAck> {
  const response = await fetchImpl(`${base}/feedback`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(feedback),
  });
  if (!response.ok) throw await asError(response);
  return (await response.json()) as FeedbackAck;
}
