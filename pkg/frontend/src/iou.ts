/** Intersection over union of two equally sized binary masks. */
export function iou(a: Uint8Array, b: Uint8Array): number {
  if (a.length !== b.length) {
    throw new Error(`mask lengths differ: ${a.length} vs ${b.length}`);
  }
  let inter = 0;
  let union = 0;
  for (let i = 0; i < a.length; i++) {
    const av = a[i] !== 0;
    const bv = b[i] !== 0;
    if (av && bv) inter += 1;
    if (av || bv) union += 1;
  }
  // two empty masks agree perfectly
  return union === 0 ? 1.0 : inter / union;
}
