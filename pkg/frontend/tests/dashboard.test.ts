import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { Dashboard } from "../src/app.js";
import type { SnapshotView, StudentProfile } from "../src/types.js";

// Mocked API conforming to the documented snapshot/profile schema.
const STATE: SnapshotView = {
  version: 2,
  published_at: 1700000042,
  panorama_url: "/api/v1/panorama.png?version=2",
  annotations: [
    { box: { x: 10, y: 10, w: 40, h: 30 }, band: "high", confidence: 0.9,
      student_id: "s001", display_name: "Ada Lovelace" },
    { box: { x: 200, y: 40, w: 36, h: 28 }, band: "unknown", confidence: 0.2 },
  ],
  stats: { tiles: 63, detections: 2, matched_high: 1, matched_tentative: 0, unknown: 1 },
};

const PROFILE: StudentProfile = {
  student_id: "s001",
  display_name: "Ada Lovelace",
  profile: { program: "CS" },
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function fakeLoader(): (url: string) => Promise<HTMLImageElement> {
  return (url) => {
    const img = document.createElement("img");
    img.width = 640;
    img.height = 320;
    img.setAttribute("data-src", url);
    return Promise.resolve(img);
  };
}

describe("Dashboard", () => {
  let fetchMock: ReturnType<typeof vi.fn>;
  let dashboard: Dashboard;

  beforeEach(() => {
    document.body.innerHTML = `<div id="root"></div>`;
    fetchMock = vi.fn(async (input: RequestInfo | URL) => {
      const url = String(input);
      if (url.endsWith("/api/v1/state")) return jsonResponse(STATE);
      if (url.includes("/api/v1/students/s001")) return jsonResponse(PROFILE);
      if (url.includes("/api/v1/students/")) return jsonResponse({ detail: "x" }, 404);
      if (url.endsWith("/api/v1/call-log")) return jsonResponse({ position: 0 }, 201);
      throw new Error(`unexpected fetch ${url}`);
    });
    vi.stubGlobal("fetch", fetchMock);
    dashboard = new Dashboard(document.getElementById("root")!,
                              new ApiClient(""), { loadImage: fakeLoader() });
  });

  afterEach(() => {
    vi.unstubAllGlobals();
  });

  function boxes(): HTMLElement[] {
    return [...dashboard.view.boxLayer.querySelectorAll<HTMLElement>(".nm-box")];
  }

  it("renders the fetched snapshot with the matching panorama version", async () => {
    await dashboard.renderLatest();
    expect(dashboard.view.displayedVersion()).toBeNull; // image carries no version tag of its own
    expect(dashboard.view.versionEl.dataset.version).toBe("2");
    const img = dashboard.view.stage.querySelector("img")!;
    expect(img.getAttribute("data-src")).toContain("version=2");
    expect(boxes()).toHaveLength(2);
  });

  it("skips the re-render when the version is already displayed", async () => {
    await dashboard.renderLatest();
    const stateCalls = fetchMock.mock.calls.length;
    await dashboard.renderLatest();
    expect(fetchMock.mock.calls.length).toBe(stateCalls + 1); // only /state, no image swap
    expect(dashboard.view.stage.querySelectorAll("img")).toHaveLength(1);
  });

  it("hovering a named box fetches and renders the profile panel", async () => {
    await dashboard.renderLatest();
    await dashboard.onHover(STATE.annotations[0]);
    expect(fetchMock.mock.calls.some((c) => String(c[0]).includes("/students/s001")))
      .toBe(true);
    expect(dashboard.view.panel.querySelector(".nm-profile-name")?.textContent)
      .toBe("Ada Lovelace");
    expect(dashboard.view.panel.textContent).toContain("CS");
  });

  it("hovering an unknown box fetches nothing and keeps the panel", async () => {
    await dashboard.renderLatest();
    await dashboard.onHover(STATE.annotations[0]);
    const before = dashboard.view.panel.innerHTML;
    const calls = fetchMock.mock.calls.length;
    await dashboard.onHover(STATE.annotations[1]);
    expect(fetchMock.mock.calls.length).toBe(calls);
    expect(dashboard.view.panel.innerHTML).toBe(before);
  });

  it("shows unavailable when the profile 404s (opted out)", async () => {
    await dashboard.renderLatest();
    await dashboard.onHover({ ...STATE.annotations[0], student_id: "s999" });
    expect(dashboard.view.panel.textContent).toContain("unavailable");
  });

  it("clicking a named box posts to the call log and ticks the box", async () => {
    await dashboard.renderLatest();
    await dashboard.onClick(STATE.annotations[0]);
    const call = fetchMock.mock.calls.find((c) => String(c[0]).endsWith("/call-log"));
    expect(call).toBeDefined();
    expect(JSON.parse((call![1] as RequestInit).body as string))
      .toEqual({ student_id: "s001" });
    expect(boxes()[0].classList.contains("nm-called")).toBe(true);
  });

  it("clicking an unknown box is a no-op", async () => {
    await dashboard.renderLatest();
    const calls = fetchMock.mock.calls.length;
    await dashboard.onClick(STATE.annotations[1]);
    expect(fetchMock.mock.calls.length).toBe(calls);
  });

  it("rolls back the tick and toasts when the post fails", async () => {
    await dashboard.renderLatest();
    fetchMock.mockImplementation(async (input: RequestInfo | URL) => {
      if (String(input).endsWith("/call-log")) throw new TypeError("offline");
      return jsonResponse(STATE);
    });
    await dashboard.onClick(STATE.annotations[0]);
    expect(boxes()[0].classList.contains("nm-called")).toBe(false);
    expect(dashboard.view.toast.hidden).toBe(false);
  });

  it("sends the shared token on posts when configured", async () => {
    const api = new ApiClient("", "swordfish");
    await api.postCall("s001");
    const call = fetchMock.mock.calls.find((c) => String(c[0]).endsWith("/call-log"));
    const headers = (call![1] as RequestInit).headers as Record<string, string>;
    expect(headers["X-NaMemo-Token"]).toBe("swordfish");
  });
});
