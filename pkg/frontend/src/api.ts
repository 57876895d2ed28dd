/**
 * Typed client for the segmentation service HTTP API.
 *
 * All mutating endpoints return the complete session state; the UI never
 * derives mask state locally.
 */

import type { RleMask } from "./rle.js";

export interface PromptPoint {
  id: number;
  x: number;
  y: number;
  label: number; // 1 = foreground, 0 = background
}

export interface SessionState {
  session_id?: string;
  points: PromptPoint[];
  mask: RleMask;
  lambdas: Record<string, number>;
  cache_size: number;
  image: { h: number; w: number };
  grid: { h: number; w: number };
  timing_ms?: number;
}

export interface ScoreCurve {
  lam: number[];
  total: number[];
}

export interface DiagnosticsPoint extends PromptPoint {
  lambda?: number;
  curve?: ScoreCurve;
}

export interface Diagnostics {
  points: DiagnosticsPoint[];
}

export interface CreateRequest {
  synthetic?: object;
  attn?: Blob;
  image?: Blob;
  method?: string;
  params?: object;
  height?: number;
  width?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The surface the state machine drives; ApiClient is the live implementation. */
export interface SegmentationApi {
  createSession(req: CreateRequest): Promise<SessionState>;
  click(sid: string, x: number, y: number, label: number): Promise<SessionState>;
  undo(sid: string): Promise<SessionState>;
  getState(sid: string): Promise<SessionState>;
  diagnostics(sid: string): Promise<Diagnostics | null>;
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      if (typeof body?.detail === "string") {
        detail = body.detail;
      } else if (body?.detail !== undefined) {
        detail = JSON.stringify(body.detail);
      }
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient implements SegmentationApi {
  constructor(readonly baseUrl: string = "") {}

  async health(): Promise<{ status: string; sessions: number; version: string }> {
    return unwrap(await fetch(`${this.baseUrl}/healthz`));
  }

  async createSession(req: CreateRequest): Promise<SessionState> {
    const form = new FormData();
    if (req.synthetic !== undefined) {
      form.set("synthetic", JSON.stringify(req.synthetic));
    }
    if (req.attn !== undefined) form.set("attn", req.attn, "tensor.atn1");
    if (req.image !== undefined) form.set("image", req.image, "image.png");
    if (req.method !== undefined) form.set("method", req.method);
    if (req.params !== undefined) form.set("params", JSON.stringify(req.params));
    if (req.height !== undefined) form.set("height", String(req.height));
    if (req.width !== undefined) form.set("width", String(req.width));
    return unwrap(await fetch(`${this.baseUrl}/sessions`, { method: "POST", body: form }));
  }

  async click(sid: string, x: number, y: number, label: number): Promise<SessionState> {
    return unwrap(
      await fetch(`${this.baseUrl}/sessions/${sid}/clicks`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ x, y, label }),
      }),
    );
  }

  async undo(sid: string): Promise<SessionState> {
    return unwrap(await fetch(`${this.baseUrl}/sessions/${sid}/undo`, { method: "POST" }));
  }

  async getState(sid: string): Promise<SessionState> {
    return unwrap(await fetch(`${this.baseUrl}/sessions/${sid}`));
  }

  /** Resolves to null when the server does not expose diagnostics at all. */
  async diagnostics(sid: string): Promise<Diagnostics | null> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sid}/diagnostics`);
    if (resp.status === 404) return null;
    return unwrap(resp);
  }

  maskUrl(sid: string): string {
    return `${this.baseUrl}/sessions/${sid}/mask.png`;
  }
}
