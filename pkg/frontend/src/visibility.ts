/** Card visibility tracking.
 *
 * A card counts as "seen" once at least half of it has stayed in the
 * viewport for a dwell time (500 ms). Seen ids are batched and posted
 * in arrival order; the server keeps the last three distinct ids.
 * Reporting is best-effort telemetry: one retry, then the batch drops.
 */

export const VISIBILITY_THRESHOLD = 0.5;
export const DWELL_MS = 500;
export const FLUSH_MS = 200;

export type PostVisibility = (cardIds: string[]) => Promise<unknown>;

type ObserverFactory = (
  callback: IntersectionObserverCallback,
  options: IntersectionObserverInit,
) => IntersectionObserver;

export class VisibilityTracker {
  private readonly post: PostVisibility;
  private readonly observer: IntersectionObserver;
  private readonly cardIds = new WeakMap<Element, string>();
  private readonly dwellTimers = new Map<Element, ReturnType<typeof setTimeout>>();
  private queue: string[] = [];
  private flushTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly dwellMs: number;

  constructor(
    post: PostVisibility,
    options?: { dwellMs?: number; observerFactory?: ObserverFactory },
  ) {
    this.post = post;
    this.dwellMs = options?.dwellMs ?? DWELL_MS;
    const factory: ObserverFactory =
      options?.observerFactory ??
      ((callback, init) => new IntersectionObserver(callback, init));
    this.observer = factory((entries) => this.handle(entries), {
      threshold: VISIBILITY_THRESHOLD,
    });
  }

  observe(element: Element, cardId: string): void {
    this.cardIds.set(element, cardId);
    this.observer.observe(element);
  }

  disconnect(): void {
    this.observer.disconnect();
    for (const timer of this.dwellTimers.values()) clearTimeout(timer);
    this.dwellTimers.clear();
  }

  private handle(entries: IntersectionObserverEntry[]): void {
    for (const entry of entries) {
      const element = entry.target;
      const visible =
        entry.isIntersecting && entry.intersectionRatio >= VISIBILITY_THRESHOLD;
      const pending = this.dwellTimers.get(element);
      if (visible && pending === undefined) {
        this.dwellTimers.set(
          element,
          setTimeout(() => {
            this.dwellTimers.delete(element);
            const cardId = this.cardIds.get(element);
            if (cardId) this.enqueue(cardId);
          }, this.dwellMs),
        );
      } else if (!visible && pending !== undefined) {
        // left the viewport before the dwell elapsed: not seen
        clearTimeout(pending);
        this.dwellTimers.delete(element);
      }
    }
  }

  private enqueue(cardId: string): void {
    if (this.queue[this.queue.length - 1] !== cardId) {
      this.queue.push(cardId);
    }
    if (this.flushTimer === null) {
      this.flushTimer = setTimeout(() => void this.flush(), FLUSH_MS);
    }
  }

  async flush(): Promise<void> {
    if (this.flushTimer !== null) {
      clearTimeout(this.flushTimer);
      this.flushTimer = null;
    }
    if (this.queue.length === 0) return;
    const batch = this.queue;
    this.queue = [];
    try {
      await this.post(batch);
    } catch {
      try {
        await this.post(batch); // one retry; drops are acceptable
      } catch {
        /* best-effort */
      }
    }
  }
}
