import type { BoxDto, DetectionDto } from './types.js';

/** Zoom/pan mapping between canvas (screen) and image pixel coordinates. */
export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const IDENTITY: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };

export function screenToImage(t: ViewTransform, sx: number, sy: number): [number, number] {
  return [(sx - t.offsetX) / t.scale, (sy - t.offsetY) / t.scale];
}

export function imageToScreen(t: ViewTransform, ix: number, iy: number): [number, number] {
  return [ix * t.scale + t.offsetX, iy * t.scale + t.offsetY];
}

/** Zoom about a fixed screen point, keeping that point stationary. */
export function zoomAt(
  t: ViewTransform,
  sx: number,
  sy: number,
  factor: number,
  minScale = 0.25,
  maxScale = 16,
): ViewTransform {
  const scale = Math.min(maxScale, Math.max(minScale, t.scale * factor));
  const ratio = scale / t.scale;
  return {
    scale,
    offsetX: sx - (sx - t.offsetX) * ratio,
    offsetY: sy - (sy - t.offsetY) * ratio,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { ...t, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}

export function pointInBox(box: BoxDto, x: number, y: number): boolean {
  return x >= box.x_min && x <= box.x_max && y >= box.y_min && y <= box.y_max;
}

/**
 * Pick the detection under an image-space point. Later detections draw on
 * top, so scan back to front; among hits prefer the smallest box so tight
 * nuclei stay clickable inside looser neighbours.
 */
export function hitTest(detections: DetectionDto[], x: number, y: number): DetectionDto | null {
  let best: DetectionDto | null = null;
  let bestArea = Infinity;
  for (let i = detections.length - 1; i >= 0; i--) {
    const d = detections[i]!;
    if (!pointInBox(d.box, x, y)) continue;
    const area = (d.box.x_max - d.box.x_min) * (d.box.y_max - d.box.y_min);
    if (area < bestArea) {
      best = d;
      bestArea = area;
    }
  }
  return best;
}

/** Normalize a drag rectangle; returns null when degenerate (< 3 px a side). */
export function dragToBox(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  width: number,
  height: number,
  minSide = 3,
): BoxDto | null {
  const box = {
    x_min: Math.max(0, Math.min(x0, x1)),
    y_min: Math.max(0, Math.min(y0, y1)),
    x_max: Math.min(width, Math.max(x0, x1)),
    y_max: Math.min(height, Math.max(y0, y1)),
  };
  if (box.x_max - box.x_min < minSide || box.y_max - box.y_min < minSide) {
    return null;
  }
  return box;
}
