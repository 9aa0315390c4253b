/** Pure scatter-scene construction: embedding points to canvas marks.
 * Kept free of canvas handles so tests can assert on the scene itself. */

import { EmbeddingPoint } from "./api.js";
import { clusterColor, NOISE_COLOR } from "./palette.js";

export interface Mark {
  idx: number;
  px: number;
  py: number;
  color: string;
  role: string;
  cluster: number;
}

export interface Scene {
  marks: Mark[];
  /** true when the buffer exceeded maxPoints and uniform subsampling kicked in */
  decimated: boolean;
  sourceCount: number;
}

export const DECIMATION_LIMIT = 100_000;
const MARGIN = 12;

/** Uniform stride subsample preserving order; deterministic. */
export function decimate<T>(items: T[], limit: number): T[] {
  if (items.length <= limit) {
    return items;
  }
  const stride = items.length / limit;
  const out: T[] = [];
  for (let k = 0; k < limit; k++) {
    out.push(items[Math.floor(k * stride)]);
  }
  return out;
}

export function buildScene(
  points: EmbeddingPoint[],
  width: number,
  height: number,
  maxPoints: number = DECIMATION_LIMIT,
): Scene {
  const kept = decimate(points, maxPoints);
  if (kept.length === 0) {
    return { marks: [], decimated: false, sourceCount: 0 };
  }
  let xmin = Infinity, xmax = -Infinity, ymin = Infinity, ymax = -Infinity;
  for (const p of kept) {
    if (p.x < xmin) xmin = p.x;
    if (p.x > xmax) xmax = p.x;
    if (p.y < ymin) ymin = p.y;
    if (p.y > ymax) ymax = p.y;
  }
  const spanX = xmax - xmin || 1;
  const spanY = ymax - ymin || 1;
  const innerW = width - 2 * MARGIN;
  const innerH = height - 2 * MARGIN;
  const marks = kept.map((p) => ({
    idx: p.idx,
    px: MARGIN + ((p.x - xmin) / spanX) * innerW,
    py: MARGIN + (1 - (p.y - ymin) / spanY) * innerH,
    color: p.role === "noise" ? NOISE_COLOR : clusterColor(p.cluster),
    role: p.role,
    cluster: p.cluster,
  }));
  return { marks, decimated: kept.length < points.length, sourceCount: points.length };
}

/** Nearest mark within `radius` px of (x, y), for hover readouts. */
export function hitTest(scene: Scene, x: number, y: number, radius = 6): Mark | null {
  let best: Mark | null = null;
  let bestD = radius * radius;
  for (const m of scene.marks) {
    const d = (m.px - x) * (m.px - x) + (m.py - y) * (m.py - y);
    if (d <= bestD) {
      best = m;
      bestD = d;
    }
  }
  return best;
}
