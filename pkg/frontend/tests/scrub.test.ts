import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { DebouncedScrubber } from "../src/scrub.js";

interface Deferred {
  promise: Promise<string>;
  resolve: (value: string) => void;
  reject: (err: Error) => void;
}

function deferred(): Deferred {
  let resolve!: (value: string) => void;
  let reject!: (err: Error) => void;
  const promise = new Promise<string>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe("DebouncedScrubber", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("collapses rapid slider movement into one request", async () => {
    const fetches: number[] = [];
    const commits: Array<[number, string]> = [];
    const scrub = new DebouncedScrubber<string>(
      (v) => {
        fetches.push(v);
        return Promise.resolve(`frame@${v}`);
      },
      (v, result) => commits.push([v, result]),
    );

    scrub.set(0.1);
    await vi.advanceTimersByTimeAsync(40);
    scrub.set(0.2);
    await vi.advanceTimersByTimeAsync(40);
    scrub.set(0.3);
    await vi.advanceTimersByTimeAsync(99);
    expect(fetches).toEqual([]);

    await vi.advanceTimersByTimeAsync(1);
    expect(fetches).toEqual([0.3]);
    expect(commits).toEqual([[0.3, "frame@0.3"]]);
  });

  it("drops stale responses so the newest value always wins", async () => {
    const pending = new Map<number, Deferred>();
    const commits: number[] = [];
    const scrub = new DebouncedScrubber<string>(
      (v) => {
        const d = deferred();
        pending.set(v, d);
        return d.promise;
      },
      (v) => commits.push(v),
    );

    scrub.set(0.4);
    await vi.advanceTimersByTimeAsync(100);
    scrub.set(0.8);
    await vi.advanceTimersByTimeAsync(100);
    expect(pending.size).toBe(2);
    expect(scrub.busy).toBe(true);

    // the newer request returns first, then the older one trickles in
    pending.get(0.8)!.resolve("frame@0.8");
    await vi.runAllTimersAsync();
    expect(commits).toEqual([0.8]);

    pending.get(0.4)!.resolve("frame@0.4");
    await vi.runAllTimersAsync();
    expect(commits).toEqual([0.8]);
    expect(scrub.busy).toBe(false);
  });

  it("ignores failures from superseded requests", async () => {
    const pending = new Map<number, Deferred>();
    const commits: number[] = [];
    const errors: unknown[] = [];
    const scrub = new DebouncedScrubber<string>(
      (v) => {
        const d = deferred();
        pending.set(v, d);
        return d.promise;
      },
      (v) => commits.push(v),
      (err) => errors.push(err),
    );

    scrub.set(0.2);
    await vi.advanceTimersByTimeAsync(100);
    scrub.set(0.6);
    await vi.advanceTimersByTimeAsync(100);

    pending.get(0.6)!.resolve("frame@0.6");
    pending.get(0.2)!.reject(new Error("too slow"));
    await vi.runAllTimersAsync();

    expect(commits).toEqual([0.6]);
    expect(errors).toEqual([]);
  });

  it("reports a failure of the current request", async () => {
    const errors: unknown[] = [];
    const scrub = new DebouncedScrubber<string>(
      () => Promise.reject(new Error("service down")),
      () => {},
      (err) => errors.push(err),
    );
    scrub.set(0.5);
    await vi.runAllTimersAsync();
    expect(errors).toHaveLength(1);
    expect((errors[0] as Error).message).toBe("service down");
  });

  it("cancel() stops both the timer and stale deliveries", async () => {
    const fetches: number[] = [];
    const commits: number[] = [];
    const scrub = new DebouncedScrubber<string>(
      (v) => {
        fetches.push(v);
        return Promise.resolve(`frame@${v}`);
      },
      (v) => commits.push(v),
    );

    scrub.set(0.9);
    scrub.cancel();
    await vi.runAllTimersAsync();
    expect(fetches).toEqual([]);
    expect(commits).toEqual([]);
    expect(scrub.busy).toBe(false);
  });

  it("setImmediate skips the delay but still honors ordering", async () => {
    const commits: number[] = [];
    const scrub = new DebouncedScrubber<string>(
      (v) => Promise.resolve(`frame@${v}`),
      (v) => commits.push(v),
    );
    scrub.setImmediate(0.25);
    await vi.runAllTimersAsync();
    expect(commits).toEqual([0.25]);
  });
});
