/**
 * Diagnostics panel: one row per prompt point showing its coordinates,
 * the threshold the scorer picked, and a sparkline of total score versus
 * threshold. Hidden entirely when the server lacks the endpoint.
 */

import type { Diagnostics, DiagnosticsPoint } from "./api.js";

export function argmaxIndex(values: number[]): number {
  let best = 0;
  for (let i = 1; i < values.length; i++) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

/**
 * Position of curve sample i inside a width x height box with padding.
 * A flat curve sits on the vertical midline; a single sample spreads by
 * index instead of value.
 */
export function curvePoint(
  lam: number[],
  total: number[],
  i: number,
  width: number,
  height: number,
  pad = 2,
): { x: number; y: number } {
  const n = Math.min(lam.length, total.length);
  let lamMin = lam[0];
  let lamMax = lam[0];
  let totMin = total[0];
  let totMax = total[0];
  for (let k = 1; k < n; k++) {
    lamMin = Math.min(lamMin, lam[k]);
    lamMax = Math.max(lamMax, lam[k]);
    totMin = Math.min(totMin, total[k]);
    totMax = Math.max(totMax, total[k]);
  }
  const lamSpan = lamMax - lamMin;
  const totSpan = totMax - totMin;
  const fx = lamSpan > 0 ? (lam[i] - lamMin) / lamSpan : i / Math.max(1, n - 1);
  const fy = totSpan > 0 ? (total[i] - totMin) / totSpan : 0.5;
  return {
    x: pad + fx * (width - 2 * pad),
    y: height - pad - fy * (height - 2 * pad),
  };
}

/**
 * SVG path ("M ... L ...") for a score curve scaled into a width x height
 * box. A flat curve draws as a centered horizontal line; an empty curve
 * yields an empty path.
 */
export function sparklinePath(
  lam: number[],
  total: number[],
  width: number,
  height: number,
  pad = 2,
): string {
  const n = Math.min(lam.length, total.length);
  if (n === 0) return "";
  const parts: string[] = [];
  for (let i = 0; i < n; i++) {
    const { x, y } = curvePoint(lam, total, i, width, height, pad);
    parts.push(`${i === 0 ? "M" : "L"}${x.toFixed(2)} ${y.toFixed(2)}`);
  }
  return parts.join(" ");
}

function pointRow(doc: Document, p: DiagnosticsPoint): HTMLElement {
  const row = doc.createElement("div");
  row.className = "diag-row";

  const dot = doc.createElement("span");
  dot.className = `diag-dot ${p.label === 1 ? "fg" : "bg"}`;
  row.appendChild(dot);

  const text = doc.createElement("span");
  text.className = "diag-text";
  const lam = p.lambda !== undefined ? ` λ=${p.lambda.toFixed(4)}` : "";
  text.textContent = `#${p.id} (${p.x}, ${p.y})${lam}`;
  row.appendChild(text);

  if (p.curve !== undefined && p.curve.lam.length > 0) {
    const W = 120;
    const H = 28;
    const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("width", String(W));
    svg.setAttribute("height", String(H));
    svg.setAttribute("class", "diag-spark");

    const path = doc.createElementNS("http://www.w3.org/2000/svg", "path");
    path.setAttribute("d", sparklinePath(p.curve.lam, p.curve.total, W, H));
    path.setAttribute("fill", "none");
    path.setAttribute("stroke", "currentColor");
    path.setAttribute("stroke-width", "1");
    svg.appendChild(path);

    // mark the winning threshold on the curve itself
    const best = argmaxIndex(p.curve.total);
    const pos = curvePoint(p.curve.lam, p.curve.total, best, W, H);
    const marker = doc.createElementNS("http://www.w3.org/2000/svg", "circle");
    marker.setAttribute("cx", pos.x.toFixed(2));
    marker.setAttribute("cy", pos.y.toFixed(2));
    marker.setAttribute("r", "2.5");
    marker.setAttribute("class", "diag-marker");
    svg.appendChild(marker);

    row.appendChild(svg);
  }
  return row;
}

/** Replace the panel's contents with rows for the given diagnostics. */
export function renderDiagnostics(container: HTMLElement, diag: Diagnostics | null): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (diag === null) {
    container.hidden = true;
    return;
  }
  container.hidden = false;
  if (diag.points.length === 0) {
    const empty = doc.createElement("div");
    empty.className = "diag-empty";
    empty.textContent = "no points yet";
    container.appendChild(empty);
    return;
  }
  for (const p of diag.points) {
    container.appendChild(pointRow(doc, p));
  }
}
