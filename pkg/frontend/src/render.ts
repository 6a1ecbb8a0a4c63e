/**
 * Pure pixel composition for the slice canvas: grayscale intensity base with
 * optional probability, prediction and hint overlays blended on top. Values
 * arrive straight from the service; this file only colors them.
 */

export interface Overlay {
  values: ArrayLike<number>;
  color: [number, number, number];
  opacity: number; // 0..1, scaled further by the per-voxel value
  threshold?: number; // skip pixels at or below this value
}

/** Min-max scale a slice to 0..255 gray levels; constant slices render mid-gray. */
export function grayscale(values: ArrayLike<number>): Uint8ClampedArray {
  const n = values.length;
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < n; i++) {
    const v = values[i]!;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const out = new Uint8ClampedArray(n);
  const span = hi - lo;
  for (let i = 0; i < n; i++) {
    out[i] = span > 0 ? ((values[i]! - lo) / span) * 255 : 128;
  }
  return out;
}

/** Compose RGBA pixel data for one slice. */
export function composeSlice(
  intensity: ArrayLike<number>,
  overlays: Overlay[],
): Uint8ClampedArray {
  const gray = grayscale(intensity);
  const n = gray.length;
  const rgba = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    rgba[i * 4] = gray[i]!;
    rgba[i * 4 + 1] = gray[i]!;
    rgba[i * 4 + 2] = gray[i]!;
    rgba[i * 4 + 3] = 255;
  }
  for (const overlay of overlays) {
    const threshold = overlay.threshold ?? 0;
    for (let i = 0; i < n; i++) {
      const v = overlay.values[i]!;
      if (v <= threshold) continue;
      const alpha = Math.min(1, Math.max(0, v)) * overlay.opacity;
      for (let c = 0; c < 3; c++) {
        const idx = i * 4 + c;
        rgba[idx] = rgba[idx]! * (1 - alpha) + overlay.color[c]! * alpha;
      }
    }
  }
  return rgba;
}

/** 0/1 mask of the supervoxel containing `voxelFlat` within a labels slice. */
export function regionHighlight(
  labels: ArrayLike<number>,
  pixelIndex: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(labels.length);
  const target = labels[pixelIndex];
  for (let i = 0; i < labels.length; i++) {
    out[i] = labels[i] === target ? 1 : 0;
  }
  return out;
}
