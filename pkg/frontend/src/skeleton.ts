/** 2.5-D orthographic projection of the server-rendered skeleton.
 *
 * The console draws exactly the polylines the service computed; this
 * module only maps palm-frame millimetres (x palmar, y radial,
 * z distal) onto screen pixels plus a depth value used for paint order
 * and line weight. No kinematics happens here.
 */

import type { Skeleton, Vec3 } from "./protocol.js";

export type ViewName = "palm" | "side";

export interface ProjectedPoint {
  x: number;
  y: number;
  /** Signed distance toward the viewer, larger = nearer. */
  depth: number;
}

export interface Viewport {
  widthPx: number;
  heightPx: number;
  marginPx: number;
}

export interface Transform {
  scale: number;
  dxPx: number;
  dyPx: number;
}

export interface ProjectedPolyline {
  name: string;
  points: ProjectedPoint[];
  meanDepth: number;
}

/** Palm view looks down the palmar axis; side view down the radial axis. */
export function project(view: ViewName, p: Vec3): ProjectedPoint {
  const [x, y, z] = p;
  if (view === "palm") {
    return { x: -y, y: -z, depth: x };
  }
  return { x: x, y: -z, depth: -y };
}

export function projectPolyline(view: ViewName, name: string, line: Vec3[]): ProjectedPolyline {
  const points = line.map((p) => project(view, p));
  const meanDepth =
    points.length === 0
      ? 0
      : points.reduce((acc, p) => acc + p.depth, 0) / points.length;
  return { name, points, meanDepth };
}

/** Uniform scale and offset that centers the points inside the viewport. */
export function fitTransform(points: ProjectedPoint[], vp: Viewport): Transform {
  if (points.length === 0) {
    return { scale: 1, dxPx: vp.widthPx / 2, dyPx: vp.heightPx / 2 };
  }
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minY = Math.min(minY, p.y);
    maxY = Math.max(maxY, p.y);
  }
  const spanX = maxX - minX;
  const spanY = maxY - minY;
  const freeX = vp.widthPx - 2 * vp.marginPx;
  const freeY = vp.heightPx - 2 * vp.marginPx;
  const scale =
    spanX <= 0 && spanY <= 0
      ? 1
      : Math.min(
          spanX > 0 ? freeX / spanX : Infinity,
          spanY > 0 ? freeY / spanY : Infinity,
        );
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  return {
    scale,
    dxPx: vp.widthPx / 2 - cx * scale,
    dyPx: vp.heightPx / 2 - cy * scale,
  };
}

export function toPixels(t: Transform, p: ProjectedPoint): { x: number; y: number } {
  return { x: t.dxPx + p.x * t.scale, y: t.dyPx + p.y * t.scale };
}

/** Inverse of toPixels on the view plane; depth is chosen by the caller. */
export function fromPixels(t: Transform, xPx: number, yPx: number): { x: number; y: number } {
  return { x: (xPx - t.dxPx) / t.scale, y: (yPx - t.dyPx) / t.scale };
}

/** Screen-plane point back to palm-frame mm, keeping a known depth.
 *
 * Dragging moves a fingertip in the view plane; the coordinate along
 * the viewing axis is carried over from the tip's current position so
 * the target stays a fully server-checkable 3-D point.
 */
export function unproject(view: ViewName, planar: { x: number; y: number }, depth: number): Vec3 {
  if (view === "palm") {
    return [depth, -planar.x, -planar.y];
  }
  return [planar.x, -depth, -planar.y];
}

/** Line weight and opacity from depth: nearer strokes draw heavier. */
export function depthStyle(
  depth: number,
  depthRange: { min: number; max: number },
): { widthPx: number; alpha: number } {
  const span = depthRange.max - depthRange.min;
  const t = span > 0 ? (depth - depthRange.min) / span : 0.5;
  return { widthPx: 1.5 + 2.5 * t, alpha: 0.45 + 0.55 * t };
}

/** Project and depth-sort a whole skeleton, far lines first. */
export function layoutSkeleton(view: ViewName, skeleton: Skeleton): ProjectedPolyline[] {
  const lines: ProjectedPolyline[] = [];
  if (skeleton.palm_outline.length > 0) {
    const outline = [...skeleton.palm_outline, skeleton.palm_outline[0] as Vec3];
    lines.push(projectPolyline(view, "palm", outline));
  }
  for (const [digit, line] of Object.entries(skeleton.digits)) {
    lines.push(projectPolyline(view, digit, line));
  }
  lines.sort((a, b) => a.meanDepth - b.meanDepth);
  return lines;
}
