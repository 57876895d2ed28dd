/**
 * Overlay rendering. The decoded server mask becomes a semi-transparent
 * pixel layer above the base image; prompt points draw as filled circles,
 * green for foreground and red for background. Every render starts from a
 * blank layer, so the canvas always mirrors the latest server response.
 */

import type { PromptPoint } from "./api.js";

export type Rgb = [number, number, number];

export const FG_COLOR: Rgb = [34, 197, 94]; // green
export const BG_COLOR: Rgb = [239, 68, 68]; // red
export const MASK_COLOR: Rgb = [59, 130, 246]; // blue fill
export const MASK_ALPHA = 128; // ~50% opacity

// muted flat colors for synthetic partition backdrops
const PARTITION_PALETTE: Rgb[] = [
  [96, 108, 56],
  [40, 54, 24],
  [221, 161, 94],
  [188, 108, 37],
  [254, 250, 224],
  [109, 104, 117],
  [181, 131, 141],
];

/** RGBA buffer of the mask layer; transparent outside the mask. */
export function renderMaskPixels(
  mask: Uint8Array,
  color: Rgb = MASK_COLOR,
  alpha: number = MASK_ALPHA,
): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(mask.length * 4);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      const o = i * 4;
      rgba[o] = color[0];
      rgba[o + 1] = color[1];
      rgba[o + 2] = color[2];
      rgba[o + 3] = alpha;
    }
  }
  return rgba;
}

/** Opaque RGBA backdrop for synthetic sessions: one flat color per region. */
export function renderPartitionBase(
  partition: number[][],
  height: number,
  width: number,
): Uint8ClampedArray<ArrayBuffer> {
  const gh = partition.length;
  const gw = partition[0].length;
  const rgba = new Uint8ClampedArray(height * width * 4);
  for (let y = 0; y < height; y++) {
    const gy = Math.floor((y * gh) / height);
    for (let x = 0; x < width; x++) {
      const gx = Math.floor((x * gw) / width);
      const color = PARTITION_PALETTE[partition[gy][gx] % PARTITION_PALETTE.length];
      const o = (y * width + x) * 4;
      rgba[o] = color[0];
      rgba[o + 1] = color[1];
      rgba[o + 2] = color[2];
      rgba[o + 3] = 255;
    }
  }
  return rgba;
}

export interface DisplayRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/**
 * Map a client-space position on the displayed canvas to integer image
 * coordinates, or null when it falls outside the image.
 */
export function toImageCoords(
  clientX: number,
  clientY: number,
  rect: DisplayRect,
  imageW: number,
  imageH: number,
): { x: number; y: number } | null {
  if (rect.width <= 0 || rect.height <= 0) return null;
  const fx = (clientX - rect.left) / rect.width;
  const fy = (clientY - rect.top) / rect.height;
  if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) return null;
  return { x: Math.floor(fx * imageW), y: Math.floor(fy * imageH) };
}

/** Canvas pair: a base layer for the image and an overlay for mask + points. */
export class OverlayView {
  private imageW = 0;
  private imageH = 0;

  constructor(
    private readonly base: HTMLCanvasElement,
    private readonly overlay: HTMLCanvasElement,
  ) {}

  get width(): number {
    return this.imageW;
  }

  get height(): number {
    return this.imageH;
  }

  resize(imageW: number, imageH: number): void {
    this.imageW = imageW;
    this.imageH = imageH;
    for (const canvas of [this.base, this.overlay]) {
      canvas.width = imageW;
      canvas.height = imageH;
    }
    this.clear();
  }

  clear(): void {
    this.overlay.getContext("2d")!.clearRect(0, 0, this.imageW, this.imageH);
  }

  drawBaseImage(img: CanvasImageSource): void {
    this.base.getContext("2d")!.drawImage(img, 0, 0, this.imageW, this.imageH);
  }

  drawBasePixels(rgba: Uint8ClampedArray<ArrayBuffer>): void {
    const ctx = this.base.getContext("2d")!;
    ctx.putImageData(new ImageData(rgba, this.imageW, this.imageH), 0, 0);
  }

  /** Repaint the overlay from a server snapshot (mask already decoded). */
  render(mask: Uint8Array | null, points: PromptPoint[]): void {
    const ctx = this.overlay.getContext("2d")!;
    ctx.clearRect(0, 0, this.imageW, this.imageH);
    if (mask !== null) {
      const layer = renderMaskPixels(mask);
      ctx.putImageData(new ImageData(layer, this.imageW, this.imageH), 0, 0);
    }
    const radius = Math.max(3, Math.round(this.imageW / 80));
    for (const p of points) {
      const [r, g, b] = p.label === 1 ? FG_COLOR : BG_COLOR;
      ctx.beginPath();
      ctx.arc(p.x + 0.5, p.y + 0.5, radius, 0, Math.PI * 2);
      ctx.fillStyle = `rgb(${r}, ${g}, ${b})`;
      ctx.fill();
      ctx.lineWidth = Math.max(1, radius / 3);
      ctx.strokeStyle = "white";
      ctx.stroke();
    }
  }
}
