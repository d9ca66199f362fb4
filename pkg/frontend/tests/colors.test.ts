import { describe, expect, it } from "vitest";

import { BAND_COLORS, bandColor, nameLabel } from "../src/colors.js";
import type { Annotation } from "../src/types.js";

function annotation(partial: Partial<Annotation>): Annotation {
  return { box: { x: 0, y: 0, w: 10, h: 10 }, band: "high", confidence: 0.9, ...partial };
}

describe("band colors", () => {
  it("maps high to blue, tentative to yellow, unknown to gray", () => {
    expect(bandColor("high")).toBe("#2563eb");
    expect(bandColor("tentative")).toBe("#eab308");
    expect(bandColor("unknown")).toBe("#9ca3af");
  });

  it("derives color from band alone", () => {
    expect(Object.keys(BAND_COLORS).sort()).toEqual(["high", "tentative", "unknown"]);
  });
});

describe("name labels", () => {
  it("labels high and tentative bands", () => {
    expect(nameLabel(annotation({ band: "high", student_id: "s1", display_name: "Ada" })))
      .toBe("Ada");
    expect(nameLabel(annotation({ band: "tentative", student_id: "s1", display_name: "Ada" })))
      .toBe("Ada");
  });

  it("never labels unknown boxes", () => {
    expect(nameLabel(annotation({ band: "unknown" }))).toBeNull();
    // even a malformed payload with a name on an unknown band stays unlabeled
    expect(nameLabel(annotation({ band: "unknown", display_name: "Leak" }))).toBeNull();
  });
});
