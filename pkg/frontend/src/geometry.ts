/**
 * Brush-capture geometry, kept numerically identical to the server's
 * rasterizer so hull previews drawn in the browser match what the engine
 * will compute from the submitted points.
 *
 * Pixel convention: pixel (x, y) covers the half-open unit square
 * [x, x+1) x [y, y+1) and its center sits at (x+0.5, y+0.5). Orientation
 * language (counterclockwise) refers to the mathematical plane with y up.
 */

export type Point = [number, number];

/** Index of the pixel whose unit square contains this coordinate. */
export function snapIndex(coord: number): number {
  return Math.floor(coord);
}

/** Snap a free coordinate to the containing pixel's center, clamped in-canvas. */
export function snapCenter(point: readonly number[], width: number, height: number): Point {
  const ix = Math.min(Math.max(snapIndex(point[0] ?? 0), 0), width - 1);
  const iy = Math.min(Math.max(snapIndex(point[1] ?? 0), 0), height - 1);
  return [ix + 0.5, iy + 0.5];
}

function cross(o: Point, a: Point, b: Point): number {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

/**
 * Strict convex hull, counterclockwise, starting at the lexicographic
 * minimum. Collinear boundary points and duplicates are dropped.
 * Degenerate inputs return what is left: a single point, or the two
 * endpoints of a segment.
 */
export function convexHull(points: Iterable<readonly number[]>): Point[] {
  const unique = new Map<string, Point>();
  for (const p of points) {
    const q: Point = [Number(p[0]), Number(p[1])];
    unique.set(`${q[0]},${q[1]}`, q);
  }
  const pts = [...unique.values()].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  if (pts.length <= 2) return pts;
  const lower: Point[] = [];
  for (const p of pts) {
    while (lower.length >= 2 && cross(lower[lower.length - 2]!, lower[lower.length - 1]!, p) <= 0) {
      lower.pop();
    }
    lower.push(p);
  }
  const upper: Point[] = [];
  for (let i = pts.length - 1; i >= 0; i--) {
    const p = pts[i]!;
    while (upper.length >= 2 && cross(upper[upper.length - 2]!, upper[upper.length - 1]!, p) <= 0) {
      upper.pop();
    }
    upper.push(p);
  }
  return lower.slice(0, -1).concat(upper.slice(0, -1));
}
