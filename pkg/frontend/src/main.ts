/**
 * Application wiring: upload form / bundled demo, click-to-segment canvas,
 * undo, toast-based error reporting, and the diagnostics panel.
 *
 * Rendering is strictly snapshot-driven. Click handlers only enqueue
 * requests; pixels change when the server answers.
 */

import { ApiClient } from "./api.js";
import type { SegmentationApi, SessionState } from "./api.js";
import { SessionController } from "./state.js";
import { decodeMask } from "./rle.js";
import { iou } from "./iou.js";
import { OverlayView, renderPartitionBase, toImageCoords } from "./overlay.js";
import { renderDiagnostics } from "./diagnostics.js";
import { DEMO_PARTITION, DEMO_SPEC } from "./demo.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const serverInput = el<HTMLInputElement>("server-url");
const methodSelect = el<HTMLSelectElement>("method");
const attnInput = el<HTMLInputElement>("file-attn");
const imageInput = el<HTMLInputElement>("file-image");
const gtInput = el<HTMLInputElement>("file-gt");
const demoButton = el<HTMLButtonElement>("btn-demo");
const createButton = el<HTMLButtonElement>("btn-create");
const undoButton = el<HTMLButtonElement>("btn-undo");
const statusLine = el<HTMLElement>("status");
const pointsList = el<HTMLElement>("points-list");
const diagPanel = el<HTMLElement>("diagnostics");
const iouReadout = el<HTMLElement>("iou-readout");
const toastBox = el<HTMLElement>("toast");
const toastText = el<HTMLElement>("toast-text");
const toastRetry = el<HTMLButtonElement>("toast-retry");
const toastDismiss = el<HTMLButtonElement>("toast-dismiss");

const view = new OverlayView(
  el<HTMLCanvasElement>("canvas-base"),
  el<HTMLCanvasElement>("canvas-overlay"),
);
const overlayCanvas = el<HTMLCanvasElement>("canvas-overlay");

function currentClient(): ApiClient {
  return new ApiClient(serverInput.value.trim().replace(/\/+$/, ""));
}

// delegate per call so the server URL field takes effect immediately
const api: SegmentationApi = {
  createSession: (req) => currentClient().createSession(req),
  click: (sid, x, y, label) => currentClient().click(sid, x, y, label),
  undo: (sid) => currentClient().undo(sid),
  getState: (sid) => currentClient().getState(sid),
  diagnostics: (sid) => currentClient().diagnostics(sid),
};

const controller = new SessionController(api);

// ---- presentation state (never mask state) ----
let demoActive = false;
let uploadedImage: File | null = null;
let gtMask: Uint8Array | null = null;
let gtSize: { h: number; w: number } | null = null;
let baseDrawnFor: string | null = null;
let diagSeq = 0;

function showToast(message: string, retry: (() => void) | null): void {
  toastText.textContent = message;
  toastRetry.hidden = retry === null;
  toastRetry.onclick = () => {
    hideToast();
    retry?.();
  };
  toastBox.hidden = false;
}

function hideToast(): void {
  toastBox.hidden = true;
}

toastDismiss.onclick = hideToast;

controller.onError = (message, retry) => showToast(message, retry);
controller.onStale = () => {
  baseDrawnFor = null;
  showToast("session expired on the server - create a new one", null);
};

async function drawBase(snapshot: SessionState): Promise<void> {
  const key = `${controller.id}:${snapshot.image.w}x${snapshot.image.h}`;
  if (baseDrawnFor === key) return;
  view.resize(snapshot.image.w, snapshot.image.h);
  if (demoActive) {
    view.drawBasePixels(renderPartitionBase(DEMO_PARTITION, snapshot.image.h, snapshot.image.w));
  } else if (uploadedImage !== null) {
    view.drawBaseImage(await createImageBitmap(uploadedImage));
  }
  baseDrawnFor = key;
}

function renderPoints(snapshot: SessionState): void {
  pointsList.replaceChildren();
  for (const p of snapshot.points) {
    const row = document.createElement("li");
    row.className = p.label === 1 ? "fg" : "bg";
    row.textContent = `#${p.id} (${p.x}, ${p.y}) ${p.label === 1 ? "foreground" : "background"}`;
    pointsList.appendChild(row);
  }
  undoButton.disabled = snapshot.points.length === 0;
}

function renderIou(mask: Uint8Array, snapshot: SessionState): void {
  if (
    gtMask === null ||
    gtSize === null ||
    gtSize.h !== snapshot.image.h ||
    gtSize.w !== snapshot.image.w
  ) {
    iouReadout.textContent = "";
    return;
  }
  iouReadout.textContent = `IoU vs GT: ${iou(mask, gtMask).toFixed(4)}`;
}

function refreshDiagnostics(): void {
  const sid = controller.id;
  if (sid === null) return;
  const seq = ++diagSeq;
  void api
    .diagnostics(sid)
    .then((diag) => {
      if (seq === diagSeq) renderDiagnostics(diagPanel, diag);
    })
    .catch(() => {
      // panel is advisory; a failed fetch just leaves it unchanged
    });
}

controller.subscribe((snapshot) => {
  if (snapshot === null) {
    view.clear();
    pointsList.replaceChildren();
    diagPanel.replaceChildren();
    iouReadout.textContent = "";
    statusLine.textContent = "no session";
    undoButton.disabled = true;
    return;
  }
  void drawBase(snapshot).then(() => {
    const mask = decodeMask(snapshot.mask);
    view.render(mask, snapshot.points);
    renderPoints(snapshot);
    renderIou(mask, snapshot);
    const timing =
      snapshot.timing_ms !== undefined ? ` - ${snapshot.timing_ms.toFixed(0)} ms` : "";
    statusLine.textContent =
      `grid ${snapshot.grid.w}x${snapshot.grid.h}, ` +
      `image ${snapshot.image.w}x${snapshot.image.h}${timing}`;
    refreshDiagnostics();
  });
});

// ---- session creation ----

demoButton.onclick = () => {
  hideToast();
  demoActive = true;
  uploadedImage = null;
  baseDrawnFor = null;
  controller.create({
    synthetic: DEMO_SPEC,
    method: methodSelect.value,
    height: 256,
    width: 256,
  });
};

createButton.onclick = () => {
  const attn = attnInput.files?.[0];
  const image = imageInput.files?.[0];
  if (attn === undefined || image === undefined) {
    showToast("select both an attention file and an image", null);
    return;
  }
  hideToast();
  demoActive = false;
  uploadedImage = image;
  baseDrawnFor = null;
  controller.create({ attn, image, method: methodSelect.value });
};

// ---- clicks: left = foreground, right = background ----

function handlePointer(event: MouseEvent, label: 0 | 1): void {
  const snapshot = controller.snapshot;
  if (snapshot === null) return;
  const pos = toImageCoords(
    event.clientX,
    event.clientY,
    overlayCanvas.getBoundingClientRect(),
    snapshot.image.w,
    snapshot.image.h,
  );
  if (pos === null) return;
  controller.click(pos.x, pos.y, label);
}

overlayCanvas.addEventListener("click", (e) => handlePointer(e, 1));
overlayCanvas.addEventListener("contextmenu", (e) => {
  e.preventDefault();
  handlePointer(e, 0);
});

// ---- undo ----

undoButton.onclick = () => controller.undo();
document.addEventListener("keydown", (e) => {
  if ((e.ctrlKey || e.metaKey) && e.key === "z") {
    e.preventDefault();
    if (!undoButton.disabled) controller.undo();
  }
});

// ---- ground-truth mask upload (enables the IoU readout) ----

gtInput.onchange = async () => {
  const file = gtInput.files?.[0];
  if (file === undefined) {
    gtMask = null;
    gtSize = null;
    return;
  }
  const bitmap = await createImageBitmap(file);
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const ctx = scratch.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const mask = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < mask.length; i++) {
    mask[i] = data[i * 4] > 127 ? 1 : 0;
  }
  gtMask = mask;
  gtSize = { h: bitmap.height, w: bitmap.width };
  const snapshot = controller.snapshot;
  if (snapshot !== null) {
    renderIou(decodeMask(snapshot.mask), snapshot);
  }
};

statusLine.textContent = "no session";
undoButton.disabled = true;
