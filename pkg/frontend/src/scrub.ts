/**
 * Debounced slider driver with last-write-wins delivery.
 *
 * Rapid slider movement produces one request for the final value
 * (100 ms of quiet by default), and a response is committed only if no
 * newer value was requested while it was in flight. Stale responses
 * are dropped silently; the display never goes backwards.
 */
export class DebouncedScrubber<T> {
  private generation = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = 0;

  constructor(
    private readonly fetchValue: (value: number) => Promise<T>,
    private readonly commit: (value: number, result: T) => void,
    private readonly onError: (err: unknown) => void = () => {},
    private readonly delayMs = 100,
  ) {}

  /** True while a request is queued or awaiting a response. */
  get busy(): boolean {
    return this.timer !== null || this.inFlight > 0;
  }

  set(value: number): void {
    this.generation += 1;
    const gen = this.generation;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire(gen, value);
    }, this.delayMs);
  }

  /** Bypass the debounce delay; still subject to last-write-wins. */
  setImmediate(value: number): void {
    this.generation += 1;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.fire(this.generation, value);
  }

  private fire(gen: number, value: number): void {
    this.inFlight += 1;
    this.fetchValue(value)
      .then((result) => {
        if (gen === this.generation) this.commit(value, result);
      })
      .catch((err) => {
        if (gen === this.generation) this.onError(err);
      })
      .finally(() => {
        this.inFlight -= 1;
      });
  }

  cancel(): void {
    this.generation += 1;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}
