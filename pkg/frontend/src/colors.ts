import type { Annotation, Band } from "./types.js";

// Box colors are derived from the confidence band and nothing else:
// blue for high, yellow for tentative, neutral gray outline for unknown.
export const BAND_COLORS: Record<Band, string> = {
  high: "#2563eb",
  tentative: "#eab308",
  unknown: "#9ca3af",
};

export function bandColor(band: Band): string {
  return BAND_COLORS[band];
}

// A name label is shown only for high and tentative bands.
export function nameLabel(annotation: Annotation): string | null {
  if (annotation.band === "unknown") return null;
  return annotation.display_name ?? null;
}
