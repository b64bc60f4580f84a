/** Case review view: projected centerline tree with the service's red/gray
 * overlay, per-extraction probabilities, mosaic display, and accept/reject
 * adjudication.
 *
 * Colors and decisions are copied from API fields; the stroke palette below
 * only maps the server's color names onto CSS colors, and the raw name is
 * kept on each polyline as data-color.  After an adjudication POST the view
 * refetches the record over GET and renders the persisted copy.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  pointsAttribute,
  projectPolyline,
  sceneBounds,
  viewBoxOf,
} from "./projection.js";
import { clear, el, svgEl } from "./render.js";
import type {
  AdjudicationDecision,
  AdjudicationRecord,
  CaseResultResponse,
  OverlayColor,
} from "./types.js";

export const STROKE_BY_COLOR: Record<OverlayColor, string> = {
  Red: "#c62828",
  Gray: "#9e9e9e",
};

export const DEFAULT_REVIEWER = "reviewer-1";

export interface CaseViewOptions {
  reviewer?: string;
}

export interface CaseViewHandle {
  root: HTMLElement;
  /** Resolves when the most recent click-triggered request chain settles. */
  pending: Promise<void>;
  refresh(): Promise<void>;
  setRotation(deg: number): void;
}

function renderNotFound(container: HTMLElement, caseId: string): CaseViewHandle {
  const root = el("div", "not-found", `case ${caseId} not found`);
  root.dataset.caseId = caseId;
  clear(container);
  container.appendChild(root);
  return {
    root,
    pending: Promise.resolve(),
    refresh: () => Promise.resolve(),
    setRotation: () => undefined,
  };
}

function renderError(container: HTMLElement, caseId: string, err: unknown): CaseViewHandle {
  const message = err instanceof Error ? err.message : String(err);
  const root = el("div", "case-error", `cannot load case ${caseId}: ${message}`);
  root.dataset.caseId = caseId;
  clear(container);
  container.appendChild(root);
  return {
    root,
    pending: Promise.resolve(),
    refresh: () => Promise.resolve(),
    setRotation: () => undefined,
  };
}

function adjudicationText(record: AdjudicationRecord): string {
  const note = record.note ? ` note: ${record.note}` : "";
  return (
    `${record.decision} by ${record.reviewer} at ${record.timestamp}` +
    ` (seq ${record.seq})${note}`
  );
}

export async function renderCase(
  container: HTMLElement,
  api: ApiClient,
  caseId: string,
  options: CaseViewOptions = {},
): Promise<CaseViewHandle> {
  let data: CaseResultResponse;
  try {
    data = await api.caseResult(caseId);
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      return renderNotFound(container, caseId);
    }
    return renderError(container, caseId, err);
  }

  const root = el("div", "case-view");
  root.dataset.caseId = caseId;

  // -- summary ------------------------------------------------------------
  root.appendChild(el("h2", undefined, caseId));
  const summary = el("div", "summary");
  const decision = el("span", "case-decision", data.result.case_decision);
  decision.dataset.decision = data.result.case_decision;
  summary.appendChild(decision);
  summary.appendChild(el("code", "model-ref", data.result.model_ref));
  summary.appendChild(el("span", "threshold", `threshold ${data.result.threshold}`));
  summary.appendChild(
    el("span", "latency", `${data.result.total_latency_ms} ms`),
  );
  root.appendChild(summary);

  // -- projected tree with overlay colors ---------------------------------
  const svg = svgEl("svg");
  svg.setAttribute("class", "tree-view");
  svg.setAttribute("width", "420");
  svg.setAttribute("height", "420");
  const lines: { node: SVGElement; polylineMm: number[][] }[] = [];
  for (const segment of data.overlay.segments) {
    const node = svgEl("polyline");
    node.dataset.segmentId = segment.segment_id;
    node.dataset.color = segment.color;
    node.setAttribute("stroke", STROKE_BY_COLOR[segment.color]);
    node.setAttribute("stroke-width", "0.8");
    node.setAttribute("stroke-linecap", "round");
    node.setAttribute("fill", "none");
    const title = svgEl("title");
    title.textContent = segment.segment_id;
    node.appendChild(title);
    svg.appendChild(node);
    lines.push({ node, polylineMm: segment.polyline_mm });
  }

  function reproject(deg: number): void {
    const projected = lines.map((l) => projectPolyline(l.polylineMm, deg));
    svg.setAttribute("viewBox", viewBoxOf(sceneBounds(projected)));
    projected.forEach((line, i) => {
      lines[i].node.setAttribute("points", pointsAttribute(line));
    });
  }
  reproject(0);
  root.appendChild(svg);

  // -- rotation slider -----------------------------------------------------
  const rotationLabel = el("label", "rotation-control", "rotation ");
  const slider = el("input", "rotation");
  slider.type = "range";
  slider.min = "-90";
  slider.max = "90";
  slider.step = "1";
  slider.value = "0";
  const rotationValue = el("span", "rotation-value", "0°");
  slider.addEventListener("input", () => {
    rotationValue.textContent = `${slider.value}°`;
    reproject(Number(slider.value));
  });
  rotationLabel.appendChild(slider);
  rotationLabel.appendChild(rotationValue);
  root.appendChild(rotationLabel);

  // -- mosaic panel ---------------------------------------------------------
  const mpvPanel = el("figure", "mpv-panel");
  mpvPanel.hidden = true;
  const mpvCaption = el("figcaption", "mpv-caption");
  const mpvImage = el("img", "mpv-image");
  mpvImage.alt = "mosaic projection view";
  const mpvMeta = el("pre", "mpv-meta");
  mpvPanel.appendChild(mpvCaption);
  mpvPanel.appendChild(mpvImage);
  mpvPanel.appendChild(mpvMeta);

  let pending: Promise<void> = Promise.resolve();

  async function showMosaic(extractionId: string): Promise<void> {
    mpvCaption.textContent = extractionId;
    mpvPanel.dataset.extractionId = extractionId;
    mpvImage.src = api.mpvImageUrl(caseId, extractionId);
    mpvPanel.hidden = false;
    try {
      const meta = await api.mpvMeta(caseId, extractionId);
      mpvMeta.textContent = JSON.stringify(meta, null, 1);
    } catch {
      mpvMeta.textContent = "";
    }
  }

  // -- per-extraction probability list --------------------------------------
  const extractionTable = el("table", "extractions");
  const extractionHead = document.createElement("thead");
  const headRow = document.createElement("tr");
  for (const name of ["extraction", "probability", "decision", ""]) {
    headRow.appendChild(el("th", undefined, name));
  }
  extractionHead.appendChild(headRow);
  extractionTable.appendChild(extractionHead);
  const extractionBody = document.createElement("tbody");
  for (const item of data.result.extractions) {
    const row = document.createElement("tr");
    row.dataset.extractionId = item.extraction_id;
    row.appendChild(el("td", "extraction-id", item.extraction_id));
    row.appendChild(el("td", "probability", String(item.probability)));
    const cell = el("td", "decision", item.decision);
    cell.dataset.decision = item.decision;
    row.appendChild(cell);
    const actions = el("td");
    const view = el("button", "show-mpv", "mosaic");
    view.dataset.extractionId = item.extraction_id;
    view.addEventListener("click", () => {
      pending = showMosaic(item.extraction_id);
    });
    actions.appendChild(view);
    row.appendChild(actions);
    extractionBody.appendChild(row);
  }
  extractionTable.appendChild(extractionBody);
  root.appendChild(extractionTable);
  root.appendChild(mpvPanel);

  // -- adjudication ----------------------------------------------------------
  const adjPanel = el("div", "adjudication-panel");
  const record = el("div", "adjudication-record", "no adjudication yet");
  adjPanel.appendChild(record);

  const reviewerInput = el("input", "reviewer");
  reviewerInput.value = options.reviewer ?? DEFAULT_REVIEWER;
  const noteInput = el("input", "note");
  noteInput.placeholder = "note";
  adjPanel.appendChild(reviewerInput);
  adjPanel.appendChild(noteInput);

  function showRecord(latest: AdjudicationRecord | null): void {
    if (latest === null) {
      record.textContent = "no adjudication yet";
      delete record.dataset.decision;
      delete record.dataset.seq;
      return;
    }
    record.textContent = adjudicationText(latest);
    record.dataset.decision = latest.decision;
    record.dataset.seq = String(latest.seq);
  }

  async function adjudicate(decisionValue: AdjudicationDecision): Promise<void> {
    await api.adjudicate(caseId, decisionValue, reviewerInput.value, noteInput.value);
    const stored = await api.adjudication(caseId);
    showRecord(stored.latest);
    root.dispatchEvent(new CustomEvent("adjudicated", { detail: stored.latest }));
  }

  for (const decisionValue of ["Accept", "Reject"] as const) {
    const button = el("button", "adjudicate", decisionValue);
    button.dataset.decision = decisionValue;
    button.addEventListener("click", () => {
      pending = adjudicate(decisionValue);
    });
    adjPanel.appendChild(button);
  }
  root.appendChild(adjPanel);

  try {
    showRecord((await api.adjudication(caseId)).latest);
  } catch {
    // adjudication endpoint unavailable; leave the empty-record text
  }

  clear(container);
  container.appendChild(root);

  return {
    root,
    get pending() {
      return pending;
    },
    refresh: async () => {
      await renderCase(container, api, caseId, options);
    },
    setRotation: (deg: number) => {
      slider.value = String(deg);
      rotationValue.textContent = `${deg}°`;
      reproject(deg);
    },
  };
}
