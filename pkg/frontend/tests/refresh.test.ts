import { describe, expect, it, vi } from "vitest";

import { RefreshQueue, StaleTracker } from "../src/refresh.js";

function deferred(): { promise: Promise<void>; resolve: () => void } {
  let resolve!: () => void;
  const promise = new Promise<void>((r) => { resolve = r; });
  return { promise, resolve };
}

describe("RefreshQueue", () => {
  it("coalesces bursts down to the newest version", async () => {
    const rendered: number[] = [];
    const gate = deferred();
    const queue = new RefreshQueue(async (v) => {
      rendered.push(v);
      if (rendered.length === 1) await gate.promise; // first render is slow
    });
    queue.notify(1);
    queue.notify(2);
    queue.notify(3);
    queue.notify(4);
    gate.resolve();
    await vi.waitFor(() => expect(rendered.at(-1)).toBe(4));
    // versions 2 and 3 were never fetched
    expect(rendered).toEqual([1, 4]);
  });

  it("never runs two renders at once", async () => {
    let inFlight = 0;
    let maxInFlight = 0;
    const queue = new RefreshQueue(async () => {
      inFlight += 1;
      maxInFlight = Math.max(maxInFlight, inFlight);
      await new Promise((r) => setTimeout(r, 1));
      inFlight -= 1;
    });
    for (let v = 1; v <= 6; v += 1) queue.notify(v);
    await vi.waitFor(() => expect(inFlight).toBe(0));
    expect(maxInFlight).toBe(1);
  });

  it("ignores stale notifications", async () => {
    const rendered: number[] = [];
    const queue = new RefreshQueue(async (v) => { rendered.push(v); });
    queue.notify(5);
    await vi.waitFor(() => expect(rendered).toEqual([5]));
    queue.notify(3);
    await new Promise((r) => setTimeout(r, 5));
    expect(rendered).toEqual([5]);
  });
});

describe("StaleTracker", () => {
  it("raises stale after two refresh intervals without events", () => {
    let now = 0;
    const states: boolean[] = [];
    const tracker = new StaleTracker(90, (s) => states.push(s), () => now);
    now = 179_000;
    tracker.check();
    expect(states.at(-1)).toBe(false);
    now = 181_000;
    tracker.check();
    expect(states.at(-1)).toBe(true);
    tracker.sawEvent();
    expect(states.at(-1)).toBe(false);
    now += 179_000;
    tracker.check();
    expect(states.at(-1)).toBe(false);
  });
});
