import { describe, expect, it } from "vitest";

import {
  MASK_ALPHA,
  MASK_COLOR,
  renderMaskPixels,
  renderPartitionBase,
  toImageCoords,
} from "../src/overlay.js";

describe("renderMaskPixels", () => {
  it("paints mask pixels at half opacity and leaves the rest transparent", () => {
    const rgba = renderMaskPixels(new Uint8Array([0, 1, 0, 1]));
    expect(rgba).toHaveLength(16);
    // background pixel fully transparent
    expect(Array.from(rgba.slice(0, 4))).toEqual([0, 0, 0, 0]);
    // foreground pixel carries the mask color at MASK_ALPHA
    expect(Array.from(rgba.slice(4, 8))).toEqual([...MASK_COLOR, MASK_ALPHA]);
    expect(MASK_ALPHA).toBe(128);
  });

  it("renders an empty mask fully transparent", () => {
    const rgba = renderMaskPixels(new Uint8Array(9));
    expect(rgba.every((v) => v === 0)).toBe(true);
  });
});

describe("renderPartitionBase", () => {
  it("is opaque and gives different regions different colors", () => {
    const partition = [
      [0, 1],
      [0, 1],
    ];
    const rgba = renderPartitionBase(partition, 4, 4);
    expect(rgba).toHaveLength(64);
    for (let i = 3; i < rgba.length; i += 4) expect(rgba[i]).toBe(255);
    const left = Array.from(rgba.slice(0, 3));
    const right = Array.from(rgba.slice(3 * 4, 3 * 4 + 3));
    expect(left).not.toEqual(right);
    // all pixels within one region share a color
    expect(Array.from(rgba.slice(4 * 4 * 3, 4 * 4 * 3 + 3))).toEqual(left);
  });
});

describe("toImageCoords", () => {
  const rect = { left: 10, top: 20, width: 200, height: 100 };

  it("maps display positions to floor image coordinates", () => {
    expect(toImageCoords(10, 20, rect, 64, 32)).toEqual({ x: 0, y: 0 });
    expect(toImageCoords(110, 70, rect, 64, 32)).toEqual({ x: 32, y: 16 });
    // just inside the far corner lands on the last pixel
    expect(toImageCoords(209.9, 119.9, rect, 64, 32)).toEqual({ x: 63, y: 31 });
  });

  it("returns null outside the canvas", () => {
    expect(toImageCoords(9, 20, rect, 64, 32)).toBeNull();
    expect(toImageCoords(210, 70, rect, 64, 32)).toBeNull();
    expect(toImageCoords(110, 120, rect, 64, 32)).toBeNull();
  });

  it("returns null for a degenerate rect", () => {
    expect(toImageCoords(0, 0, { left: 0, top: 0, width: 0, height: 0 }, 8, 8)).toBeNull();
  });
});
