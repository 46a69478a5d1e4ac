/** Test doubles: a controllable IntersectionObserver. */

type Callback = IntersectionObserverCallback;

export class FakeIntersectionObserver implements IntersectionObserver {
  static instances: FakeIntersectionObserver[] = [];

  readonly root = null;
  readonly rootMargin = "";
  readonly thresholds: number[];
  readonly observed: Element[] = [];
  private readonly callback: Callback;

  constructor(callback: Callback, options?: IntersectionObserverInit) {
    this.callback = callback;
    const threshold = options?.threshold ?? 0;
    this.thresholds = Array.isArray(threshold) ? threshold : [threshold];
    FakeIntersectionObserver.instances.push(this);
  }

  observe(target: Element): void {
    this.observed.push(target);
  }

  unobserve(target: Element): void {
    const index = this.observed.indexOf(target);
    if (index >= 0) this.observed.splice(index, 1);
  }

  disconnect(): void {
    this.observed.length = 0;
  }

  takeRecords(): IntersectionObserverEntry[] {
    return [];
  }

  /** Drive visibility from a test: ratio >= threshold means on-screen. */
  emit(target: Element, ratio: number): void {
    const entry = {
      target,
      isIntersecting: ratio > 0,
      intersectionRatio: ratio,
      boundingClientRect: {} as DOMRectReadOnly,
      intersectionRect: {} as DOMRectReadOnly,
      rootBounds: null,
      time: 0,
    } as IntersectionObserverEntry;
    this.callback([entry], this);
  }

  static reset(): void {
    FakeIntersectionObserver.instances = [];
  }

  static factory(
    callback: IntersectionObserverCallback,
    options: IntersectionObserverInit,
  ): IntersectionObserver {
    return new FakeIntersectionObserver(callback, options);
  }

  static latest(): FakeIntersectionObserver {
    const instance =
      FakeIntersectionObserver.instances[FakeIntersectionObserver.instances.length - 1];
    if (!instance) throw new Error("no FakeIntersectionObserver created yet");
    return instance;
  }
}

export function flushMicrotasks(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
