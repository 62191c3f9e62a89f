/** Pan/zoom mapping between image pixels and screen (canvas) pixels.
 *
 * An image coordinate (x, y) lands on screen at (x * zoom + panX, y * zoom + panY);
 * the inverse takes a screen position back to the image pixel under it. Zoom is
 * clamped to [1, 8] — the upper end exists so ~5 px targets are clickable.
 */

export interface Vec2 {
  readonly x: number;
  readonly y: number;
}

export interface Viewport {
  readonly zoom: number;
  readonly panX: number;
  readonly panY: number;
}

export const MIN_ZOOM = 1;
export const MAX_ZOOM = 8;

export function clampZoom(zoom: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

export function imageToScreen(view: Viewport, p: Vec2): Vec2 {
  return { x: p.x * view.zoom + view.panX, y: p.y * view.zoom + view.panY };
}

export function screenToImage(view: Viewport, p: Vec2): Vec2 {
  return { x: (p.x - view.panX) / view.zoom, y: (p.y - view.panY) / view.zoom };
}

export function pannedBy(view: Viewport, dx: number, dy: number): Viewport {
  return { zoom: view.zoom, panX: view.panX + dx, panY: view.panY + dy };
}

/** Rescale around a fixed screen point so the image pixel under the cursor stays put. */
export function zoomedAt(view: Viewport, anchor: Vec2, factor: number): Viewport {
  const zoom = clampZoom(view.zoom * factor);
  const scale = zoom / view.zoom;
  return {
    zoom,
    panX: anchor.x - (anchor.x - view.panX) * scale,
    panY: anchor.y - (anchor.y - view.panY) * scale,
  };
}

/** Starting view for a freshly opened tile: 1:1 pixels, centered in the canvas. */
export function centeredView(
  imageWidth: number,
  imageHeight: number,
  canvasWidth: number,
  canvasHeight: number,
): Viewport {
  return {
    zoom: 1,
    panX: Math.round((canvasWidth - imageWidth) / 2),
    panY: Math.round((canvasHeight - imageHeight) / 2),
  };
}
