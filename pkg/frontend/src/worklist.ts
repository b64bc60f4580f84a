/** Polling case list: one row per worklist entry, state badges, and an open
 * control for cases whose inference is ready for review.
 *
 * Every cell mirrors an API field verbatim; the view derives nothing.
 */

import { ApiClient } from "./api.js";
import { clear, dashIfNull, el } from "./render.js";
import type { WorklistEntry } from "./types.js";

export const DEFAULT_POLL_MS = 2000;

export interface WorklistOptions {
  pollMs?: number;
  onOpenCase?: (caseId: string) => void;
}

export interface WorklistHandle {
  root: HTMLElement;
  refresh(): Promise<void>;
  stop(): void;
}

const COLUMNS = ["case", "state", "decision", "adjudication", "latency (ms)", "error", ""];

function entryRow(entry: WorklistEntry, onOpen?: (caseId: string) => void): HTMLTableRowElement {
  const row = document.createElement("tr");
  row.dataset.caseId = entry.case_id;
  row.appendChild(el("td", "case-id", entry.case_id));

  const stateCell = el("td");
  const badge = el("span", "badge", entry.state);
  badge.dataset.state = entry.state;
  stateCell.appendChild(badge);
  row.appendChild(stateCell);

  const decisionCell = el("td", "decision", dashIfNull(entry.case_decision));
  if (entry.case_decision !== null) decisionCell.dataset.decision = entry.case_decision;
  row.appendChild(decisionCell);

  const adjCell = el("td", "adjudication", dashIfNull(entry.adjudication));
  if (entry.adjudication !== null) adjCell.dataset.decision = entry.adjudication;
  row.appendChild(adjCell);

  row.appendChild(el("td", "latency", dashIfNull(entry.total_latency_ms)));
  row.appendChild(el("td", "error", dashIfNull(entry.error)));

  const actionCell = el("td", "actions");
  if (entry.state === "InferenceReady") {
    const open = el("button", "open-case", "review");
    open.dataset.caseId = entry.case_id;
    open.addEventListener("click", () => onOpen?.(entry.case_id));
    actionCell.appendChild(open);
  }
  row.appendChild(actionCell);
  return row;
}

export function renderWorklist(
  container: HTMLElement,
  api: ApiClient,
  options: WorklistOptions = {},
): WorklistHandle {
  const root = el("div", "worklist");
  const banner = el("div", "connection-banner");
  banner.hidden = true;
  root.appendChild(banner);

  const caption = el("div", "worklist-caption", "0 cases");
  root.appendChild(caption);

  const table = el("table", "worklist-table");
  const head = document.createElement("thead");
  const headRow = document.createElement("tr");
  for (const name of COLUMNS) headRow.appendChild(el("th", undefined, name));
  head.appendChild(headRow);
  table.appendChild(head);
  const body = document.createElement("tbody");
  table.appendChild(body);
  root.appendChild(table);

  clear(container);
  container.appendChild(root);

  async function refresh(): Promise<void> {
    let entries: WorklistEntry[];
    try {
      entries = await api.listCases();
    } catch (err) {
      banner.textContent = `service unreachable: ${err instanceof Error ? err.message : err}`;
      banner.hidden = false;
      return;
    }
    banner.hidden = true;
    caption.textContent = `${entries.length} case${entries.length === 1 ? "" : "s"}`;
    clear(body);
    for (const entry of entries) body.appendChild(entryRow(entry, options.onOpenCase));
  }

  const timer = setInterval(() => void refresh(), options.pollMs ?? DEFAULT_POLL_MS);
  void refresh();

  return {
    root,
    refresh,
    stop: () => clearInterval(timer),
  };
}
