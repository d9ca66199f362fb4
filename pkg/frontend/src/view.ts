import { bandColor, nameLabel } from "./colors.js";
import type { Annotation, SnapshotView, StudentProfile } from "./types.js";

export interface BoxHandlers {
  onHover: (annotation: Annotation) => void;
  onClick: (annotation: Annotation) => void;
}

// DOM-only renderer: panorama <img> plus absolutely positioned box divs,
// a sticky profile side panel, a version/stale status line and a toast.
// Box geometry is expressed in percent of the image's pixel size, so the
// overlay tracks the image through CSS scaling.
export class DashboardView {
  readonly stage: HTMLElement;
  readonly boxLayer: HTMLElement;
  readonly panel: HTMLElement;
  readonly status: HTMLElement;
  readonly versionEl: HTMLElement;
  readonly staleBadge: HTMLElement;
  readonly toast: HTMLElement;
  private image: HTMLImageElement | null = null;

  constructor(root: HTMLElement) {
    root.innerHTML = `
      <div class="nm-main">
        <div class="nm-stage"><div class="nm-boxes"></div></div>
        <aside class="nm-panel"><p class="nm-panel-hint">Hover a named box to see the profile.</p></aside>
      </div>
      <div class="nm-status">
        <span class="nm-version">waiting for first scan</span>
        <span class="nm-stale" hidden>STALE</span>
      </div>
      <div class="nm-toast" hidden></div>`;
    this.stage = root.querySelector(".nm-stage") as HTMLElement;
    this.boxLayer = root.querySelector(".nm-boxes") as HTMLElement;
    this.panel = root.querySelector(".nm-panel") as HTMLElement;
    this.status = root.querySelector(".nm-status") as HTMLElement;
    this.versionEl = root.querySelector(".nm-version") as HTMLElement;
    this.staleBadge = root.querySelector(".nm-stale") as HTMLElement;
    this.toast = root.querySelector(".nm-toast") as HTMLElement;
  }

  // Swap image, boxes and version indicator in one synchronous pass so the
  // displayed version always belongs to the displayed panorama.
  renderSnapshot(view: SnapshotView, image: HTMLImageElement,
                 handlers: BoxHandlers): void {
    image.className = "nm-panorama";
    image.dataset.version = String(view.version);
    if (this.image) this.image.remove();
    this.stage.insertBefore(image, this.boxLayer);
    this.image = image;

    const iw = image.width || 1;
    const ih = image.height || 1;
    this.boxLayer.replaceChildren();
    for (const annotation of view.annotations) {
      const el = document.createElement("div");
      el.className = `nm-box nm-band-${annotation.band}`;
      el.style.borderColor = bandColor(annotation.band);
      el.style.left = `${(100 * annotation.box.x) / iw}%`;
      el.style.top = `${(100 * annotation.box.y) / ih}%`;
      el.style.width = `${(100 * annotation.box.w) / iw}%`;
      el.style.height = `${(100 * annotation.box.h) / ih}%`;
      const label = nameLabel(annotation);
      if (label !== null) {
        const span = document.createElement("span");
        span.className = "nm-label";
        span.style.background = bandColor(annotation.band);
        span.textContent = label;
        el.appendChild(span);
      }
      if (annotation.student_id) {
        el.dataset.studentId = annotation.student_id;
      } else {
        el.classList.add("nm-disabled");
      }
      el.addEventListener("mouseenter", () => handlers.onHover(annotation));
      el.addEventListener("click", () => handlers.onClick(annotation));
      this.boxLayer.appendChild(el);
    }
    this.versionEl.textContent = `scan #${view.version}`;
    this.versionEl.dataset.version = String(view.version);
  }

  displayedVersion(): number | null {
    return this.image ? Number(this.image.dataset.version) : null;
  }

  showProfile(profile: StudentProfile): void {
    const rows = Object.entries(profile.profile)
      .map(([k, v]) => `<dt>${escapeHtml(k)}</dt><dd>${escapeHtml(v)}</dd>`)
      .join("");
    this.panel.innerHTML = `
      <h2 class="nm-profile-name">${escapeHtml(profile.display_name)}</h2>
      <p class="nm-profile-id">${escapeHtml(profile.student_id)}</p>
      <dl class="nm-profile-fields">${rows}</dl>`;
  }

  showProfileUnavailable(): void {
    this.panel.innerHTML = `<p class="nm-panel-unavailable">Profile unavailable.</p>`;
  }

  setStale(stale: boolean): void {
    this.staleBadge.hidden = !stale;
  }

  private boxesFor(studentId: string): HTMLElement[] {
    return [...this.boxLayer.querySelectorAll<HTMLElement>(".nm-box")]
      .filter((el) => el.dataset.studentId === studentId);
  }

  markCalled(studentId: string): void {
    for (const el of this.boxesFor(studentId)) el.classList.add("nm-called");
  }

  unmarkCalled(studentId: string): void {
    for (const el of this.boxesFor(studentId)) el.classList.remove("nm-called");
  }

  showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.hidden = false;
    setTimeout(() => { this.toast.hidden = true; }, 4000);
  }
}

function escapeHtml(raw: string): string {
  return raw.replace(/[&<>"']/g, (c) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  }[c] as string));
}
