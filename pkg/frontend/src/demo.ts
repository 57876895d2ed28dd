/**
 * Bundled synthetic demo: a 4x4 attention grid split into four regions,
 * mirroring the server's synthetic session format. No upload needed.
 */

export const DEMO_PARTITION: number[][] = [
  [0, 1, 1, 2],
  [0, 1, 1, 2],
  [0, 3, 3, 2],
  [0, 3, 3, 2],
];

export const DEMO_SPEC = {
  h: 4,
  w: 4,
  in_region_mass: 0.8,
  partition: DEMO_PARTITION,
};

/** Pixel id of the region covering (y, x) when the grid is stretched to height x width. */
export function regionAt(partition: number[][], y: number, x: number, height: number, width: number): number {
  const gh = partition.length;
  const gw = partition[0].length;
  const gy = Math.min(gh - 1, Math.floor((y * gh) / height));
  const gx = Math.min(gw - 1, Math.floor((x * gw) / width));
  return partition[gy][gx];
}

/** Binary pixel mask of one region of the stretched partition. */
export function regionMask(partition: number[][], regionId: number, height: number, width: number): Uint8Array {
  const mask = new Uint8Array(height * width);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (regionAt(partition, y, x, height, width) === regionId) {
        mask[y * width + x] = 1;
      }
    }
  }
  return mask;
}
