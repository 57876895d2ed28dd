import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import type {
  CreateRequest,
  Diagnostics,
  SegmentationApi,
  SessionState,
} from "../src/api.js";
import { SessionController } from "../src/state.js";

class Deferred<T> {
  promise: Promise<T>;
  resolve!: (value: T) => void;
  reject!: (err: unknown) => void;

  constructor() {
    this.promise = new Promise<T>((resolve, reject) => {
      this.resolve = resolve;
      this.reject = reject;
    });
  }
}

function makeState(overrides: Partial<SessionState> = {}): SessionState {
  return {
    points: [],
    mask: { h: 2, w: 2, counts: [4] },
    lambdas: {},
    cache_size: 0,
    image: { h: 2, w: 2 },
    grid: { h: 2, w: 2 },
    ...overrides,
  };
}

/** Every call parks on a deferred the test resolves by hand. */
class FakeApi implements SegmentationApi {
  calls: string[] = [];
  deferreds: Deferred<SessionState>[] = [];

  private park(name: string): Promise<SessionState> {
    this.calls.push(name);
    const d = new Deferred<SessionState>();
    this.deferreds.push(d);
    return d.promise;
  }

  createSession(_req: CreateRequest): Promise<SessionState> {
    return this.park("create");
  }

  click(sid: string, x: number, y: number, label: number): Promise<SessionState> {
    return this.park(`click ${x},${y},${label} @${sid}`);
  }

  undo(sid: string): Promise<SessionState> {
    return this.park(`undo @${sid}`);
  }

  getState(sid: string): Promise<SessionState> {
    return this.park(`state @${sid}`);
  }

  diagnostics(_sid: string): Promise<Diagnostics | null> {
    return Promise.resolve(null);
  }
}

const flush = () => new Promise((resolve) => setTimeout(resolve, 0));

describe("SessionController", () => {
  it("keeps a single request in flight and queues the rest in order", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);

    controller.create({ synthetic: {} });
    await flush();
    api.deferreds[0].resolve(makeState({ session_id: "s1" }));
    await flush();

    controller.click(1, 1, 1);
    controller.click(2, 2, 0); // issued while the first is pending
    await flush();
    expect(api.calls).toEqual(["create", "click 1,1,1 @s1"]);
    expect(controller.pending).toBe(2);

    api.deferreds[1].resolve(makeState({ points: [{ id: 0, x: 1, y: 1, label: 1 }] }));
    await flush();
    expect(api.calls).toEqual(["create", "click 1,1,1 @s1", "click 2,2,0 @s1"]);

    api.deferreds[2].resolve(
      makeState({
        points: [
          { id: 0, x: 1, y: 1, label: 1 },
          { id: 1, x: 2, y: 2, label: 0 },
        ],
      }),
    );
    await flush();
    expect(controller.pending).toBe(0);
    expect(controller.snapshot?.points).toHaveLength(2);
  });

  it("replaces the snapshot wholesale with each response", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);
    const seen: number[] = [];
    controller.subscribe((s) => seen.push(s?.points.length ?? -1));

    controller.create({ synthetic: {} });
    await flush();
    api.deferreds[0].resolve(makeState({ session_id: "s1" }));
    await flush();
    controller.click(0, 0, 1);
    await flush();
    api.deferreds[1].resolve(makeState({ points: [{ id: 0, x: 0, y: 0, label: 1 }] }));
    await flush();

    expect(seen).toEqual([0, 1]);
  });

  it("lets clicks queue behind a pending create and use its session id", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);

    controller.create({ synthetic: {} });
    controller.click(3, 4, 1);
    await flush();
    expect(api.calls).toEqual(["create"]);

    api.deferreds[0].resolve(makeState({ session_id: "fresh" }));
    await flush();
    expect(api.calls).toEqual(["create", "click 3,4,1 @fresh"]);
  });

  it("drops the queue on failure and offers a retry of the failed action", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);
    const errors: string[] = [];
    let retryFn: (() => void) | null = null;
    controller.onError = (message, retry) => {
      errors.push(message);
      retryFn = retry;
    };

    controller.create({ synthetic: {} });
    await flush();
    api.deferreds[0].resolve(makeState({ session_id: "s1" }));
    await flush();

    controller.click(1, 1, 1);
    controller.click(2, 2, 1);
    await flush();
    api.deferreds[1].reject(new ApiError(422, "bad click"));
    await flush();

    expect(errors).toEqual(["bad click"]);
    // the queued second click must not have been issued
    expect(api.calls).toEqual(["create", "click 1,1,1 @s1"]);

    retryFn!();
    await flush();
    expect(api.calls).toEqual(["create", "click 1,1,1 @s1", "click 1,1,1 @s1"]);
  });

  it("goes stale when the server forgets the session", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);
    let stale = 0;
    controller.onStale = () => {
      stale += 1;
    };

    controller.create({ synthetic: {} });
    await flush();
    api.deferreds[0].resolve(makeState({ session_id: "s1" }));
    await flush();

    controller.click(0, 0, 1);
    await flush();
    api.deferreds[1].reject(new ApiError(404, "unknown session"));
    await flush();

    expect(stale).toBe(1);
    expect(controller.id).toBeNull();
    expect(controller.snapshot).toBeNull();
  });

  it("reports acting without a session as an error", async () => {
    const api = new FakeApi();
    const controller = new SessionController(api);
    const errors: string[] = [];
    controller.onError = (message) => {
      errors.push(message);
    };

    controller.click(0, 0, 1);
    await flush();
    expect(errors).toEqual(["no active session"]);
    expect(api.calls).toEqual([]);
  });
});
