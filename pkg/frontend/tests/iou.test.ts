import { describe, expect, it } from "vitest";

import { iou } from "../src/iou.js";

describe("iou", () => {
  it("is 1 for identical masks", () => {
    const m = new Uint8Array([1, 0, 1, 1]);
    expect(iou(m, m)).toBe(1);
  });

  it("is 0 for disjoint masks", () => {
    expect(iou(new Uint8Array([1, 1, 0, 0]), new Uint8Array([0, 0, 1, 1]))).toBe(0);
  });

  it("counts partial overlap", () => {
    // intersection 1, union 3
    expect(iou(new Uint8Array([1, 1, 0, 0]), new Uint8Array([0, 1, 1, 0]))).toBeCloseTo(1 / 3, 12);
  });

  it("treats two empty masks as identical", () => {
    expect(iou(new Uint8Array(4), new Uint8Array(4))).toBe(1);
  });

  it("rejects length mismatches", () => {
    expect(() => iou(new Uint8Array(3), new Uint8Array(4))).toThrow(/lengths differ/);
  });
});
