/** Orthographic projection of millimeter-space centerline polylines.
 *
 * The frontal view looks along +y with the superior axis up; the rotation
 * slider spins the tree about the superior (z) axis before projecting, so
 * screen x = x cos t - y sin t and screen y = -z.
 */

export interface Point2D {
  x: number;
  y: number;
}

export interface Bounds {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export function projectPolyline(
  polylineMm: number[][],
  rotationDeg: number = 0,
): Point2D[] {
  const t = (rotationDeg * Math.PI) / 180;
  const cos = Math.cos(t);
  const sin = Math.sin(t);
  return polylineMm.map((p) => {
    const [x, y, z] = [p[0] ?? 0, p[1] ?? 0, p[2] ?? 0];
    return { x: x * cos - y * sin, y: -z };
  });
}

/** Axis-aligned bounds of the projected scene with a relative margin. */
export function sceneBounds(polylines: Point2D[][], marginPct: number = 5): Bounds {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const line of polylines) {
    for (const p of line) {
      minX = Math.min(minX, p.x);
      minY = Math.min(minY, p.y);
      maxX = Math.max(maxX, p.x);
      maxY = Math.max(maxY, p.y);
    }
  }
  if (minX > maxX) return { minX: 0, minY: 0, maxX: 1, maxY: 1 };
  const margin = (Math.max(maxX - minX, maxY - minY) || 1) * (marginPct / 100);
  return {
    minX: minX - margin,
    minY: minY - margin,
    maxX: maxX + margin,
    maxY: maxY + margin,
  };
}

export function viewBoxOf(bounds: Bounds): string {
  const w = bounds.maxX - bounds.minX;
  const h = bounds.maxY - bounds.minY;
  return [bounds.minX, bounds.minY, w, h].map((v) => v.toFixed(3)).join(" ");
}

/** SVG polyline "points" attribute for a projected line. */
export function pointsAttribute(line: Point2D[]): string {
  return line.map((p) => `${p.x.toFixed(3)},${p.y.toFixed(3)}`).join(" ");
}
