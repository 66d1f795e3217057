/** Trailing-edge throttle for the drag command stream: at most one send per
 * interval, always flushing the latest value (jitter coalesces, release
 * never loses the final position). */

export class Throttle<T> {
  private last = -Infinity;
  private pending: T | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly intervalMs: number,
    private readonly send: (v: T) => void,
    private readonly now: () => number = () => Date.now(),
    private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  push(v: T): void {
    const t = this.now();
    if (t - this.last >= this.intervalMs) {
      this.last = t;
      this.send(v);
      return;
    }
    this.pending = v;
    if (this.timer === null) {
      const wait = this.intervalMs - (t - this.last);
      this.timer = this.schedule(() => this.flush(), wait);
    }
  }

  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.pending !== null) {
      this.last = this.now();
      this.send(this.pending);
      this.pending = null;
    }
  }
}
