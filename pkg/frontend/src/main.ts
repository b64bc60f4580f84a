/** Entry point: hash routing between the worklist and single-case views. */

import { ApiClient } from "./api.js";
import { renderCase } from "./caseview.js";
import { renderWorklist, WorklistHandle } from "./worklist.js";

const CASE_ROUTE = /^#\/cases\/(.+)$/;

export function startApp(container: HTMLElement, api: ApiClient): void {
  let worklist: WorklistHandle | null = null;

  function route(): void {
    worklist?.stop();
    worklist = null;
    const match = CASE_ROUTE.exec(window.location.hash);
    if (match) {
      void renderCase(container, api, decodeURIComponent(match[1]));
    } else {
      worklist = renderWorklist(container, api, {
        onOpenCase: (caseId) => {
          window.location.hash = `#/cases/${encodeURIComponent(caseId)}`;
        },
      });
    }
  }

  window.addEventListener("hashchange", route);
  route();
}

const mount = document.getElementById("app");
if (mount) {
  startApp(mount, new ApiClient(""));
}
