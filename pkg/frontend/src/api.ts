/** Thin fetch client for the screening service HTTP/JSON API. */

import type {
  AdjudicationDecision,
  AdjudicationRecord,
  AdjudicationResponse,
  CaseResultResponse,
  WorklistEntry,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  listCases(): Promise<WorklistEntry[]> {
    return this.request("/cases");
  }

  caseResult(caseId: string): Promise<CaseResultResponse> {
    return this.request(`/cases/${encodeURIComponent(caseId)}/result`);
  }

  mpvImageUrl(caseId: string, extractionId: string): string {
    return (
      `${this.base}/cases/${encodeURIComponent(caseId)}` +
      `/mpv/${encodeURIComponent(extractionId)}?part=image`
    );
  }

  mpvMeta(caseId: string, extractionId: string): Promise<Record<string, unknown>> {
    return this.request(
      `/cases/${encodeURIComponent(caseId)}` +
        `/mpv/${encodeURIComponent(extractionId)}?part=meta`,
    );
  }

  adjudication(caseId: string): Promise<AdjudicationResponse> {
    return this.request(`/cases/${encodeURIComponent(caseId)}/adjudication`);
  }

  adjudicate(
    caseId: string,
    decision: AdjudicationDecision,
    reviewer: string,
    note: string = "",
  ): Promise<AdjudicationRecord> {
    return this.request(`/cases/${encodeURIComponent(caseId)}/adjudication`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ decision, reviewer, note }),
    });
  }
}
