import { afterEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderCase, STROKE_BY_COLOR } from "../src/caseview.js";
import { pointsAttribute, projectPolyline } from "../src/projection.js";
import {
  allGrayCase,
  ladPositiveCase,
  ScriptedService,
} from "./fixture.js";

function mountPoint(): HTMLElement {
  const container = document.createElement("div");
  document.body.appendChild(container);
  return container;
}

afterEach(() => {
  document.body.innerHTML = "";
});

describe("renderCase overlay fidelity", () => {
  it("renders red for exactly the segments the API marks Red", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "case0001");

    const apiRed = new Set(
      service.results
        .get("case0001")!
        .overlay.segments.filter((s) => s.color === "Red")
        .map((s) => s.segment_id),
    );
    const renderedRed = new Set(
      Array.from(
        container.querySelectorAll('polyline[data-color="Red"]'),
        (node) => (node as SVGElement).dataset.segmentId,
      ),
    );
    expect(renderedRed).toEqual(apiRed);
    expect(apiRed).toEqual(new Set(["LMCA", "LAD"]));

    for (const node of container.querySelectorAll("polyline")) {
      const poly = node as SVGElement;
      const color = poly.dataset.color as "Red" | "Gray";
      expect(poly.getAttribute("stroke")).toBe(STROKE_BY_COLOR[color]);
    }
  });

  it("renders every overlay segment exactly once", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "case0001");
    const ids = Array.from(
      container.querySelectorAll("polyline"),
      (node) => (node as SVGElement).dataset.segmentId,
    );
    expect(ids.sort()).toEqual(["D1", "LAD", "LCx", "LMCA", "RCA"]);
  });

  it("an all-Gray overlay draws no red strokes", async () => {
    const service = new ScriptedService();
    allGrayCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "case0002");
    expect(container.querySelectorAll('polyline[data-color="Red"]')).toHaveLength(0);
    expect(container.querySelectorAll("polyline")).toHaveLength(2);
  });
});

describe("renderCase probability list", () => {
  it("lists each extraction with its verbatim probability and decision", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "case0001");
    const items = service.results.get("case0001")!.result.extractions;
    const rows = container.querySelectorAll(".extractions tbody tr");
    expect(rows).toHaveLength(items.length);
    items.forEach((item, i) => {
      const row = rows[i] as HTMLElement;
      expect(row.dataset.extractionId).toBe(item.extraction_id);
      expect(row.querySelector(".probability")?.textContent).toBe(
        String(item.probability),
      );
      expect(row.querySelector(".decision")?.textContent).toBe(item.decision);
    });
  });

  it("shows the mosaic for the chosen extraction", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    const handle = await renderCase(
      container,
      new ApiClient("", service.fetch),
      "case0001",
    );
    const button = container.querySelector(
      'button.show-mpv[data-extraction-id="case0001.LAD"]',
    ) as HTMLButtonElement;
    button.click();
    await handle.pending;
    const panel = container.querySelector(".mpv-panel") as HTMLElement;
    expect(panel.hidden).toBe(false);
    expect(panel.dataset.extractionId).toBe("case0001.LAD");
    const image = panel.querySelector("img") as HTMLImageElement;
    expect(image.src).toContain("/cases/case0001/mpv/case0001.LAD?part=image");
    expect(panel.querySelector(".mpv-meta")?.textContent).toContain("case0001.LAD");
  });
});

describe("renderCase adjudication round-trip", () => {
  it("Accept click posts, refetches, and renders the persisted record", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    const handle = await renderCase(
      container,
      new ApiClient("", service.fetch),
      "case0001",
    );
    const note = container.querySelector("input.note") as HTMLInputElement;
    note.value = "agree with the overlay";
    const accept = container.querySelector(
      'button.adjudicate[data-decision="Accept"]',
    ) as HTMLButtonElement;
    accept.click();
    await handle.pending;

    const persisted = service.adjudications.get("case0001");
    expect(persisted).toHaveLength(1);
    expect(persisted![0].decision).toBe("Accept");
    expect(persisted![0].note).toBe("agree with the overlay");
    expect(persisted![0].seq).toBe(0);

    const getCalls = service.requestLog.filter(
      (r) => r.method === "GET" && r.path === "/cases/case0001/adjudication",
    );
    const postCalls = service.requestLog.filter(
      (r) => r.method === "POST" && r.path === "/cases/case0001/adjudication",
    );
    expect(postCalls).toHaveLength(1);
    expect(getCalls.length).toBeGreaterThanOrEqual(2);

    const record = container.querySelector(".adjudication-record") as HTMLElement;
    expect(record.dataset.decision).toBe("Accept");
    expect(record.dataset.seq).toBe("0");
    expect(record.textContent).toContain(persisted![0].reviewer);
    expect(record.textContent).toContain(persisted![0].timestamp);
  });

  it("Reject then Accept shows the latest persisted record", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    const handle = await renderCase(
      container,
      new ApiClient("", service.fetch),
      "case0001",
    );
    const click = async (decision: string) => {
      (container.querySelector(
        `button.adjudicate[data-decision="${decision}"]`,
      ) as HTMLButtonElement).click();
      await handle.pending;
    };
    await click("Reject");
    await click("Accept");
    expect(service.adjudications.get("case0001")).toHaveLength(2);
    const record = container.querySelector(".adjudication-record") as HTMLElement;
    expect(record.dataset.decision).toBe("Accept");
    expect(record.dataset.seq).toBe("1");
  });

  it("a fresh view renders a previously persisted adjudication", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const first = mountPoint();
    const handle = await renderCase(first, new ApiClient("", service.fetch), "case0001");
    (first.querySelector(
      'button.adjudicate[data-decision="Accept"]',
    ) as HTMLButtonElement).click();
    await handle.pending;

    const second = mountPoint();
    await renderCase(second, new ApiClient("", service.fetch), "case0001");
    const record = second.querySelector(".adjudication-record") as HTMLElement;
    expect(record.dataset.decision).toBe("Accept");
  });
});

describe("renderCase failure and rotation behaviour", () => {
  it("unknown case shows the not-found view", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "nope");
    const view = container.querySelector(".not-found");
    expect(view).not.toBeNull();
    expect(view?.textContent).toContain("nope");
    expect(container.querySelector(".case-view")).toBeNull();
  });

  it("the rotation slider reprojects every polyline", async () => {
    const service = new ScriptedService();
    ladPositiveCase(service);
    const container = mountPoint();
    await renderCase(container, new ApiClient("", service.fetch), "case0001");
    const slider = container.querySelector("input.rotation") as HTMLInputElement;
    const lad = container.querySelector(
      'polyline[data-segment-id="LAD"]',
    ) as SVGElement;
    const before = lad.getAttribute("points");

    slider.value = "45";
    slider.dispatchEvent(new Event("input"));

    const ladLine = service.results
      .get("case0001")!
      .overlay.segments.find((s) => s.segment_id === "LAD")!.polyline_mm;
    expect(lad.getAttribute("points")).toBe(
      pointsAttribute(projectPolyline(ladLine, 45)),
    );
    expect(lad.getAttribute("points")).not.toBe(before);
    expect(container.querySelector(".rotation-value")?.textContent).toBe("45°");
  });
});
