/**
 * Trailing-edge debouncer for the save path.
 *
 * Repeated schedule() calls within the window collapse into one run;
 * flush() fires a pending run immediately (used before submit so the
 * server sees the final link set first). The action is async and runs
 * are serialized: a schedule during an in-flight run queues exactly
 * one follow-up.
 */

export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private running = false;
  private rerun = false;

  constructor(
    private readonly action: () => Promise<void>,
    readonly delayMs: number,
  ) {}

  schedule(): void {
    if (this.running) {
      this.rerun = true;
      return;
    }
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.run();
    }, this.delayMs);
  }

  async flush(): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
      await this.run();
    } else if (this.running) {
      this.rerun = true;
    }
  }

  get pending(): boolean {
    return this.timer !== null || this.running;
  }

  private async run(): Promise<void> {
    this.running = true;
    try {
      do {
        this.rerun = false;
        await this.action();
      } while (this.rerun);
    } finally {
      this.running = false;
    }
  }
}
