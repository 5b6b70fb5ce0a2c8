import type { Arrow, Point } from "./types.js";

/** View zoom; canvas pixels are image pixels scaled by this factor. */
export interface Viewport {
  zoom: number;
}

export function imageToScreen(view: Viewport, p: Point): Point {
  return { x: p.x * view.zoom, y: p.y * view.zoom };
}

export function screenToImage(view: Viewport, p: Point): Point {
  return { x: p.x / view.zoom, y: p.y / view.zoom };
}

/** Integer pixel under a screen position, clamped to the image. */
export function screenToPixel(view: Viewport, p: Point, width: number, height: number): Point {
  const img = screenToImage(view, p);
  return {
    x: Math.min(Math.max(Math.floor(img.x), 0), width - 1),
    y: Math.min(Math.max(Math.floor(img.y), 0), height - 1),
  };
}

/** Image-space drag to a guidance arrow anchored at the drag origin. */
export function dragToArrow(x0: number, y0: number, x1: number, y1: number): Arrow {
  return { x: x0, y: y0, u: x1 - x0, v: y1 - y0 };
}

/** Screen-space drag: anchor snaps to a pixel, the delta scales by 1/zoom. */
export function screenDragToArrow(
  view: Viewport,
  start: Point,
  end: Point,
  width: number,
  height: number,
): Arrow {
  const anchor = screenToPixel(view, start, width, height);
  const s = screenToImage(view, start);
  const e = screenToImage(view, end);
  return { x: anchor.x, y: anchor.y, u: e.x - s.x, v: e.y - s.y };
}
