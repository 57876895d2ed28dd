/**
 * Client-side session state machine.
 *
 * The server is the single source of truth: every mutation replaces the
 * local snapshot with the server's response and the UI renders only from
 * that snapshot. At most one request is in flight per session; actions
 * issued in the meantime queue up and run in order.
 */

import { ApiError } from "./api.js";
import type { CreateRequest, SegmentationApi, SessionState } from "./api.js";

export type StateListener = (snapshot: SessionState | null) => void;
export type ErrorHandler = (message: string, retry: () => void) => void;

type OpKind = "create" | "click" | "undo" | "refresh";

interface QueuedOp {
  kind: OpKind;
  run: () => Promise<SessionState>;
}

export class SessionController {
  private state: SessionState | null = null;
  private sessionId: string | null = null;
  private queue: QueuedOp[] = [];
  private busy = false;
  private listeners: StateListener[] = [];

  /** Recoverable failure: message plus a closure that re-issues the action. */
  onError: ErrorHandler | null = null;
  /** The server no longer knows the session (expired or evicted). */
  onStale: (() => void) | null = null;

  constructor(private readonly api: SegmentationApi) {}

  get snapshot(): SessionState | null {
    return this.state;
  }

  get id(): string | null {
    return this.sessionId;
  }

  /** Number of actions issued but not yet answered by the server. */
  get pending(): number {
    return this.queue.length + (this.busy ? 1 : 0);
  }

  subscribe(fn: StateListener): void {
    this.listeners.push(fn);
  }

  create(req: CreateRequest): void {
    this.enqueue({ kind: "create", run: () => this.api.createSession(req) });
  }

  click(x: number, y: number, label: 0 | 1): void {
    // the session id is read when the op actually runs, so clicks queued
    // behind a pending create resolve against the new session
    this.enqueue({
      kind: "click",
      run: () => this.api.click(this.requireSession(), x, y, label),
    });
  }

  undo(): void {
    this.enqueue({ kind: "undo", run: () => this.api.undo(this.requireSession()) });
  }

  refresh(): void {
    this.enqueue({ kind: "refresh", run: () => this.api.getState(this.requireSession()) });
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new ApiError(0, "no active session");
    }
    return this.sessionId;
  }

  private enqueue(op: QueuedOp): void {
    this.queue.push(op);
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.busy) return;
    const op = this.queue.shift();
    if (op === undefined) return;
    this.busy = true;
    try {
      const next = await op.run();
      if (op.kind === "create" && next.session_id !== undefined) {
        this.sessionId = next.session_id;
      }
      this.state = next;
      this.notify();
    } catch (err) {
      // whatever queued up behind a failed action is no longer meaningful
      this.queue = [];
      if (err instanceof ApiError && err.status === 404 && op.kind !== "create") {
        this.sessionId = null;
        this.state = null;
        this.notify();
        this.onStale?.();
      } else {
        const message = err instanceof Error ? err.message : String(err);
        this.onError?.(message, () => this.enqueue(op));
      }
    } finally {
      this.busy = false;
    }
    if (this.queue.length > 0) void this.pump();
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this.state);
  }
}
