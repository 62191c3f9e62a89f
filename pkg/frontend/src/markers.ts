/** Visual decimation for crowded tiles.
 *
 * Rendering every crosshair on a 1000-head tile turns the canvas to mush, so
 * drawing caps at `limit` markers taken at an even stride. Only the *drawn*
 * set shrinks — the annotation list itself is never decimated.
 */

export const MARKER_DRAW_LIMIT = 200;

export function visibleMarkers<T>(points: readonly T[], limit = MARKER_DRAW_LIMIT): T[] {
  if (points.length <= limit) return [...points];
  const stride = points.length / limit;
  const picked: T[] = [];
  for (let i = 0; i < limit; i++) {
    picked.push(points[Math.floor(i * stride)]);
  }
  return picked;
}
