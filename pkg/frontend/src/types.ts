// Wire types mirroring the snapshot API schema.

export type Band = "high" | "tentative" | "unknown";

export interface BoxPx {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Annotation {
  box: BoxPx;
  band: Band;
  confidence: number;
  student_id?: string;
  display_name?: string;
}

export interface SnapshotView {
  version: number;
  published_at: number;
  panorama_url: string;
  annotations: Annotation[];
  stats: Record<string, number>;
}

export interface StudentProfile {
  student_id: string;
  display_name: string;
  profile: Record<string, string>;
}
