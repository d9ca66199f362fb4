import { ApiClient } from "./api.js";
import { connectEvents } from "./events.js";
import { RefreshQueue, StaleTracker } from "./refresh.js";
import { DashboardView } from "./view.js";
import type { Annotation } from "./types.js";

export type ImageLoader = (url: string) => Promise<HTMLImageElement>;

export function browserImageLoader(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      img.width = img.naturalWidth;
      img.height = img.naturalHeight;
      resolve(img);
    };
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

export interface DashboardOptions {
  refreshIntervalS?: number;
  loadImage?: ImageLoader;
  connect?: boolean;
}

export class Dashboard {
  readonly view: DashboardView;
  private refresh: RefreshQueue;
  private stale: StaleTracker;
  private loadImage: ImageLoader;
  private disconnect: (() => void) | null = null;

  constructor(root: HTMLElement, private api: ApiClient,
              options: DashboardOptions = {}) {
    this.view = new DashboardView(root);
    this.loadImage = options.loadImage ?? browserImageLoader;
    this.refresh = new RefreshQueue(() => this.renderLatest());
    this.stale = new StaleTracker(options.refreshIntervalS ?? 90,
                                  (s) => this.view.setStale(s));
  }

  async start(): Promise<void> {
    this.stale.start();
    this.disconnect = connectEvents(this.api.eventsUrl(), {
      onSnapshot: (version) => {
        this.stale.sawEvent();
        this.refresh.notify(version);
      },
    });
    this.refresh.notify(1); // initial paint; 503 before the first cycle is fine
  }

  stop(): void {
    this.stale.stop();
    this.disconnect?.();
  }

  // One atomic refresh: fetch state, fetch its panorama, then swap the DOM.
  async renderLatest(): Promise<void> {
    const state = await this.api.getState();
    if (state === null) return;
    if (this.view.displayedVersion() === state.version) return;
    const image = await this.loadImage(this.api.panoramaUrl(state));
    this.view.renderSnapshot(state, image, {
      onHover: (a) => void this.onHover(a),
      onClick: (a) => void this.onClick(a),
    });
  }

  // Hover a named box: fetch and pin the profile. Unknown boxes fetch
  // nothing and leave the panel as it was (the panel is sticky on purpose).
  async onHover(annotation: Annotation): Promise<void> {
    if (!annotation.student_id) return;
    const profile = await this.api.getStudent(annotation.student_id);
    if (profile === null) {
      this.view.showProfileUnavailable();
    } else {
      this.view.showProfile(profile);
    }
  }

  // Click a named box: log the call optimistically, roll back on failure.
  async onClick(annotation: Annotation): Promise<void> {
    const sid = annotation.student_id;
    if (!sid) return; // unknown boxes are disabled
    this.view.markCalled(sid);
    const ok = await this.api.postCall(sid);
    if (!ok) {
      this.view.unmarkCalled(sid);
      this.view.showToast("Could not record the call; check the connection.");
    }
  }
}

function boot(): void {
  const root = document.getElementById("namemo-root");
  if (!root) return;
  const api = new ApiClient("", root.dataset.token ?? "");
  const refreshS = Number(root.dataset.refreshInterval ?? "90");
  const dashboard = new Dashboard(root, api, { refreshIntervalS: refreshS });
  void dashboard.start();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
