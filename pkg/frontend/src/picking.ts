// Screen-space point picking: nearest preview point under the cursor
// within a pixel radius.  Picking is the only geometry the UI computes.

import { OrbitCamera, Viewport } from "./camera.js";
import { Vec3 } from "./types.js";

export interface Pick {
  /** Index into the preview arrays (not the full-scene splat index). */
  previewIndex: number;
  position: Vec3;
  screenDistance: number;
}

export function pickPoint(
  means: Vec3[],
  camera: OrbitCamera,
  viewport: Viewport,
  screenX: number,
  screenY: number,
  pickRadiusPx: number,
): Pick | null {
  let best: Pick | null = null;
  let bestDepth = Infinity;
  for (let i = 0; i < means.length; i++) {
    const projected = camera.project(means[i], viewport);
    if (!projected) continue;
    const [x, y, depth] = projected;
    const d = Math.hypot(x - screenX, y - screenY);
    if (d > pickRadiusPx) continue;
    // prefer the closest point on screen; break near-ties by depth
    if (
      !best ||
      d < best.screenDistance - 1e-9 ||
      (Math.abs(d - best.screenDistance) <= 1e-9 && depth < bestDepth)
    ) {
      best = { previewIndex: i, position: means[i], screenDistance: d };
      bestDepth = depth;
    }
  }
  return best;
}
