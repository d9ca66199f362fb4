import type { SnapshotView, StudentProfile } from "./types.js";

export class ApiClient {
  constructor(private base = "", private token = "") {}

  private postHeaders(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-NaMemo-Token"] = this.token;
    return headers;
  }

  async getState(): Promise<SnapshotView | null> {
    const res = await fetch(`${this.base}/api/v1/state`);
    if (!res.ok) return null; // 503 before the first cycle
    return (await res.json()) as SnapshotView;
  }

  panoramaUrl(view: SnapshotView): string {
    return `${this.base}${view.panorama_url}`;
  }

  async getStudent(studentId: string): Promise<StudentProfile | null> {
    const res = await fetch(`${this.base}/api/v1/students/${encodeURIComponent(studentId)}`);
    if (!res.ok) return null; // unknown and opted-out are both 404
    return (await res.json()) as StudentProfile;
  }

  async postCall(studentId: string, note?: string): Promise<boolean> {
    try {
      const res = await fetch(`${this.base}/api/v1/call-log`, {
        method: "POST",
        headers: this.postHeaders(),
        body: JSON.stringify(note ? { student_id: studentId, note } : { student_id: studentId }),
      });
      return res.status === 201;
    } catch {
      return false; // offline
    }
  }

  async postConsent(studentId: string, consent: "enrolled" | "opted_out"): Promise<boolean> {
    try {
      const res = await fetch(`${this.base}/api/v1/consent`, {
        method: "POST",
        headers: this.postHeaders(),
        body: JSON.stringify({ student_id: studentId, consent }),
      });
      return res.ok;
    } catch {
      return false;
    }
  }

  eventsUrl(): string {
    const base = this.base || (typeof window !== "undefined" ? window.location.origin : "");
    return base.replace(/^http/, "ws") + "/api/v1/events";
  }
}
