/** Wire types mirroring the screening service JSON payloads field-for-field.
 *
 * The client never derives decisions or colors; everything displayed comes
 * straight from these fields.
 */

export type JobState = "Queued" | "Processing" | "InferenceReady" | "Failed";

export type CaseDecision = "PlaqueDetected" | "Clear";

export type AdjudicationDecision = "Accept" | "Reject";

export type OverlayColor = "Red" | "Gray";

/** One row of GET /cases. */
export interface WorklistEntry {
  case_id: string;
  job_id: string;
  state: JobState;
  case_decision: CaseDecision | null;
  adjudication: AdjudicationDecision | null;
  total_latency_ms: number | null;
  error: string | null;
}

/** Per-extraction inference outcome inside a case result. */
export interface ExtractionResult {
  extraction_id: string;
  probability: number;
  decision: CaseDecision;
}

/** The "result" half of GET /cases/{id}/result. */
export interface InferenceResult {
  case_id: string;
  job_id: string;
  extractions: ExtractionResult[];
  case_decision: CaseDecision;
  model_ref: string;
  threshold: number;
  total_latency_ms: number;
}

/** One colored centerline polyline; coordinates are millimeters. */
export interface OverlaySegment {
  segment_id: string;
  color: OverlayColor;
  polyline_mm: number[][];
}

/** The "overlay" half of GET /cases/{id}/result. */
export interface OverlayModel {
  case_id: string;
  segments: OverlaySegment[];
  extractions: ExtractionResult[];
}

export interface CaseResultResponse {
  result: InferenceResult;
  overlay: OverlayModel;
}

/** Persisted reviewer decision, as returned by POST and GET adjudication. */
export interface AdjudicationRecord {
  case_id: string;
  decision: AdjudicationDecision;
  reviewer: string;
  note: string;
  timestamp: string;
  seq: number;
}

export interface AdjudicationResponse {
  case_id: string;
  latest: AdjudicationRecord | null;
  history: AdjudicationRecord[];
}
