/**
 * Run-length coding of binary masks, matching the service wire format:
 * counts run over row-major pixels and alternate background/foreground,
 * always starting with a (possibly zero-length) background run.
 */

export interface RleMask {
  h: number;
  w: number;
  counts: number[];
}

export class RleError extends Error {}

export function decodeMask(payload: RleMask): Uint8Array {
  const { h, w, counts } = payload;
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 1 || w < 1) {
    throw new RleError(`bad mask size ${h}x${w}`);
  }
  let total = 0;
  for (const c of counts) {
    if (!Number.isInteger(c) || c < 0) {
      throw new RleError("RLE counts must be nonnegative integers");
    }
    total += c;
  }
  if (total !== h * w) {
    throw new RleError(`RLE counts sum to ${total}, expected ${h * w}`);
  }
  const flat = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const c of counts) {
    if (value) flat.fill(1, pos, pos + c);
    pos += c;
    value ^= 1;
  }
  return flat;
}

export function encodeMask(mask: Uint8Array, h: number, w: number): RleMask {
  if (h < 1 || w < 1 || mask.length !== h * w) {
    throw new RleError(`mask length ${mask.length} does not match ${h}x${w}`);
  }
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === value) {
      run += 1;
    } else {
      counts.push(run);
      value = v;
      run = 1;
    }
  }
  counts.push(run);
  return { h, w, counts };
}
