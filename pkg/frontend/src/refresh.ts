// Push events can outpace rendering; only the newest announced version is
// ever fetched, and renders never overlap.
export class RefreshQueue {
  private latest = 0;
  private rendered = 0;
  private running = false;

  constructor(private render: (version: number) => Promise<void>) {}

  notify(version: number): void {
    if (version > this.latest) this.latest = version;
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.running) return;
    this.running = true;
    try {
      while (this.rendered < this.latest) {
        const target = this.latest;
        await this.render(target);
        this.rendered = target;
      }
    } finally {
      this.running = false;
    }
  }
}

// Flags the dashboard stale when no snapshot event lands for two refresh
// intervals.
export class StaleTracker {
  private lastEvent: number;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private refreshIntervalS: number,
              private onChange: (stale: boolean) => void,
              private now: () => number = () => Date.now()) {
    this.lastEvent = this.now();
  }

  start(): void {
    this.timer = setInterval(() => this.check(), 1000);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  sawEvent(): void {
    this.lastEvent = this.now();
    this.onChange(false);
  }

  check(): void {
    const staleAfterMs = 2 * this.refreshIntervalS * 1000;
    this.onChange(this.now() - this.lastEvent > staleAfterMs);
  }
}
