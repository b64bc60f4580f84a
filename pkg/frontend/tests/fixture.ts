/** Scripted in-memory stand-in for the screening service HTTP API.
 *
 * Implements the same routes and payload shapes the real service serves,
 * with adjudication persistence, so view tests can verify byte-level
 * fidelity between rendered output and API fields.
 */

import type { FetchLike } from "../src/api.js";
import type {
  AdjudicationRecord,
  CaseResultResponse,
  WorklistEntry,
} from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function errorResponse(status: number, detail: string): Response {
  return jsonResponse({ detail }, status);
}

export interface RequestLogEntry {
  method: string;
  path: string;
  body?: unknown;
}

export class ScriptedService {
  worklist: WorklistEntry[] = [];
  results = new Map<string, CaseResultResponse>();
  adjudications = new Map<string, AdjudicationRecord[]>();
  requestLog: RequestLogEntry[] = [];
  /** When set, every request fails as if the service were down. */
  offline = false;
  private clock = 0;

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://service.test");
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requestLog.push({ method, path: url.pathname + url.search, body });
    if (this.offline) throw new TypeError("fetch failed");
    return this.route(method, url, body);
  };

  private route(method: string, url: URL, body: unknown): Response {
    const parts = url.pathname.split("/").filter(Boolean);
    if (method === "GET" && url.pathname === "/healthz") {
      return jsonResponse({ status: "ok" });
    }
    if (method === "GET" && url.pathname === "/cases") {
      return jsonResponse(this.worklist);
    }
    if (parts[0] === "cases" && parts.length === 3) {
      const caseId = decodeURIComponent(parts[1]);
      if (parts[2] === "result" && method === "GET") {
        const result = this.results.get(caseId);
        if (!result) return errorResponse(404, `unknown case '${caseId}'`);
        return jsonResponse(result);
      }
      if (parts[2] === "adjudication") {
        if (!this.results.has(caseId)) {
          return errorResponse(404, `unknown case '${caseId}'`);
        }
        if (method === "POST") {
          return jsonResponse(this.recordAdjudication(caseId, body));
        }
        const history = this.adjudications.get(caseId) ?? [];
        return jsonResponse({
          case_id: caseId,
          latest: history.length ? history[history.length - 1] : null,
          history,
        });
      }
    }
    if (parts[0] === "cases" && parts.length === 4 && parts[2] === "mpv") {
      const caseId = decodeURIComponent(parts[1]);
      const extractionId = decodeURIComponent(parts[3]);
      if (!this.results.has(caseId)) {
        return errorResponse(404, `unknown case '${caseId}'`);
      }
      if (url.searchParams.get("part") === "meta") {
        return jsonResponse({ extraction_id: extractionId, layout: [6, 1] });
      }
      return new Response(new Uint8Array([0x89, 0x50, 0x4e, 0x47]), {
        status: 200,
        headers: { "Content-Type": "image/png" },
      });
    }
    return errorResponse(404, `no route for ${method} ${url.pathname}`);
  }

  private recordAdjudication(caseId: string, body: unknown): AdjudicationRecord {
    const request = body as { decision: string; reviewer: string; note?: string };
    const history = this.adjudications.get(caseId) ?? [];
    const record: AdjudicationRecord = {
      case_id: caseId,
      decision: request.decision as AdjudicationRecord["decision"],
      reviewer: request.reviewer,
      note: request.note ?? "",
      timestamp: `2026-01-01T00:00:${String(this.clock++).padStart(2, "0")}.000+00:00`,
      seq: history.length,
    };
    this.adjudications.set(caseId, [...history, record]);
    const entry = this.worklist.find((e) => e.case_id === caseId);
    if (entry) entry.adjudication = record.decision;
    return record;
  }
}

/** One InferenceReady case with a positive course along LMCA -> LAD.
 *
 * The positive extraction's path covers LMCA and LAD, so exactly those two
 * segments are Red; every other branch renders Gray.
 */
export function ladPositiveCase(service: ScriptedService, caseId = "case0001"): void {
  service.worklist.push({
    case_id: caseId,
    job_id: "job-1f2e3d4c5b6a7988",
    state: "InferenceReady",
    case_decision: "PlaqueDetected",
    adjudication: null,
    total_latency_ms: 4821.337,
    error: null,
  });
  service.results.set(caseId, {
    result: {
      case_id: caseId,
      job_id: "job-1f2e3d4c5b6a7988",
      extractions: [
        { extraction_id: `${caseId}.D1`, probability: 0.41278, decision: "Clear" },
        { extraction_id: `${caseId}.LAD`, probability: 0.930517, decision: "PlaqueDetected" },
        { extraction_id: `${caseId}.LCx`, probability: 0.104322, decision: "Clear" },
        { extraction_id: `${caseId}.RCA`, probability: 0.06319, decision: "Clear" },
      ],
      case_decision: "PlaqueDetected",
      model_ref: "a3f1c5d7e9b80246a3f1c5d7e9b80246",
      threshold: 0.5,
      total_latency_ms: 4821.337,
    },
    overlay: {
      case_id: caseId,
      segments: [
        {
          segment_id: "D1",
          color: "Gray",
          polyline_mm: [[36.0, 30.0, 38.0], [42.0, 26.0, 30.0], [46.0, 24.0, 24.0]],
        },
        {
          segment_id: "LAD",
          color: "Red",
          polyline_mm: [[34.0, 32.0, 40.0], [36.0, 30.0, 32.0], [38.0, 28.0, 22.0]],
        },
        {
          segment_id: "LCx",
          color: "Gray",
          polyline_mm: [[34.0, 32.0, 40.0], [28.0, 38.0, 34.0], [24.0, 42.0, 28.0]],
        },
        {
          segment_id: "LMCA",
          color: "Red",
          polyline_mm: [[32.0, 34.0, 44.0], [34.0, 32.0, 40.0]],
        },
        {
          segment_id: "RCA",
          color: "Gray",
          polyline_mm: [[30.0, 36.0, 44.0], [24.0, 32.0, 36.0], [22.0, 30.0, 26.0]],
        },
      ],
      extractions: [
        { extraction_id: `${caseId}.D1`, probability: 0.41278, decision: "Clear" },
        { extraction_id: `${caseId}.LAD`, probability: 0.930517, decision: "PlaqueDetected" },
        { extraction_id: `${caseId}.LCx`, probability: 0.104322, decision: "Clear" },
        { extraction_id: `${caseId}.RCA`, probability: 0.06319, decision: "Clear" },
      ],
    },
  });
}

/** An all-Clear case whose overlay contains no Red segment. */
export function allGrayCase(service: ScriptedService, caseId = "case0002"): void {
  service.worklist.push({
    case_id: caseId,
    job_id: "job-aaaa111122223333",
    state: "InferenceReady",
    case_decision: "Clear",
    adjudication: null,
    total_latency_ms: 3910.02,
    error: null,
  });
  service.results.set(caseId, {
    result: {
      case_id: caseId,
      job_id: "job-aaaa111122223333",
      extractions: [
        { extraction_id: `${caseId}.LAD`, probability: 0.201, decision: "Clear" },
        { extraction_id: `${caseId}.RCA`, probability: 0.077, decision: "Clear" },
      ],
      case_decision: "Clear",
      model_ref: "a3f1c5d7e9b80246a3f1c5d7e9b80246",
      threshold: 0.5,
      total_latency_ms: 3910.02,
    },
    overlay: {
      case_id: caseId,
      segments: [
        {
          segment_id: "LAD",
          color: "Gray",
          polyline_mm: [[34.0, 32.0, 40.0], [38.0, 28.0, 22.0]],
        },
        {
          segment_id: "RCA",
          color: "Gray",
          polyline_mm: [[30.0, 36.0, 44.0], [22.0, 30.0, 26.0]],
        },
      ],
      extractions: [
        { extraction_id: `${caseId}.LAD`, probability: 0.201, decision: "Clear" },
        { extraction_id: `${caseId}.RCA`, probability: 0.077, decision: "Clear" },
      ],
    },
  });
}

/** Queued and Failed rows exercising non-actionable worklist states. */
export function pendingAndFailedCases(service: ScriptedService): void {
  service.worklist.push({
    case_id: "case0003",
    job_id: "job-bbbb444455556666",
    state: "Queued",
    case_decision: null,
    adjudication: null,
    total_latency_ms: null,
    error: null,
  });
  service.worklist.push({
    case_id: "case0004",
    job_id: "job-cccc777788889999",
    state: "Failed",
    case_decision: null,
    adjudication: null,
    total_latency_ms: null,
    error: "inadequate image quality",
  });
}
