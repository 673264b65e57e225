/** Request supersession: rapid slider movement fires overlapping requests,
 * and an older response must never render after a newer one. Each request
 * takes a monotonic ticket; only the ticket that is still newest when the
 * response lands gets applied. */
export class RequestGate {
  private counter = 0;

  begin(): number {
    this.counter += 1;
    return this.counter;
  }

  /** True iff `ticket` is the most recently issued request. */
  shouldApply(ticket: number): boolean {
    return ticket === this.counter;
  }
}

/** Debounced trailing-edge invocation keyed by name. */
export class Debouncer {
  private timers = new Map<string, ReturnType<typeof setTimeout>>();

  constructor(private delayMs: number) {}

  run(key: string, fn: () => void): void {
    const existing = this.timers.get(key);
    if (existing !== undefined) {
      clearTimeout(existing);
    }
    this.timers.set(
      key,
      setTimeout(() => {
        this.timers.delete(key);
        fn();
      }, this.delayMs),
    );
  }

  cancelAll(): void {
    for (const timer of this.timers.values()) {
      clearTimeout(timer);
    }
    this.timers.clear();
  }
}
