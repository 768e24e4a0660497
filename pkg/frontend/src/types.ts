// Wire types mirroring the server's JSON, one interface per endpoint.

/** One line of the prediction stream and of predictions.ndjson. */
export interface PredictionEvent {
  v: number;
  patient_id: string;
  t_ms: number;
  p_arrest: number;
  decision: boolean;
  source: "model" | "fused";
  model_version: number;
  twin_ref: string;
  anomaly: boolean;
  alpha: number;
  sources: string[];
}

/** Roster entry from GET /patients; prediction fields absent before the first event. */
export interface PatientSummary {
  patient_id: string;
  twin_ref: string;
  updates: number;
  t_ms?: number;
  p_arrest?: number;
  decision?: boolean;
  anomaly?: boolean;
  source?: string;
  model_version?: number;
}

export interface TwinSnapshot {
  patient_id: string;
  pressure: number;
  params: {
    resistance: number;
    compliance: number;
    stroke_volume: number;
  };
  last_t_ms: number | null;
  updates: number;
  traces: Record<string, number[]>;
}

export interface OverrideFeedback {
  patient_id: string;
  override_p: number;
  weight?: number;
}

export interface OutcomeFeedback {
  patient_id: string;
  t_ms: number;
  outcome: 0 | 1;
}

export type Feedback = OverrideFeedback | OutcomeFeedback;

export interface OverrideAck {
  status: string;
  kind: "override";
  pending: number;
  state_version: number;
}

export interface OutcomeAck {
  status: string;
  kind: "outcome";
  anomaly: boolean;
  queued: boolean;
  fine_tuned: boolean;
  model_version: number;
  state_version: number;
}

export type FeedbackAck = OverrideAck | OutcomeAck;

export type StreamStatus = "connecting" | "open" | "retrying" | "closed";
