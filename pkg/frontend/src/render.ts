// Scene construction and painting for the arena view. `buildScene` is a pure
// function from a query and canvas size to drawable shapes, so the geometry
// (including the arena -> canvas affine map) is unit-testable without a canvas.

import type { GeometryView, WireQuery } from "./types.js";

export interface CircleShape {
  kind: "circle";
  x: number;
  y: number;
  radius: number;
  color: string;
  fill: boolean;
  label?: string;
}

export interface SegmentShape {
  kind: "segment";
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  color: string;
  width: number;
  dashed?: boolean;
}

export type Shape = CircleShape | SegmentShape;

const LEFT_COLOR = "#1668c7";
const RIGHT_COLOR = "#d9621f";
const WALL_COLOR = "#222222";
const GOAL_COLOR = "#d62728";
const START_COLOR = "#111111";

/** Affine map from arena coordinates to canvas pixels (canvas y grows downward). */
export function arenaToCanvas(
  point: number[],
  bounds: number[][],
  width: number,
  height: number,
): [number, number] {
  const [[x0, y0], [x1, y1]] = bounds;
  const px = ((point[0] - x0) / (x1 - x0)) * width;
  const py = (1 - (point[1] - y0) / (y1 - y0)) * height;
  return [px, py];
}

function wallSegments(geometry: GeometryView, bounds: number[][]): Array<[number[], number[]]> {
  const [[x0, y0], [x1, y1]] = bounds;
  const segments: Array<[number[], number[]]> = [];
  for (const wall of geometry.walls) {
    const [lo, hi] = wall.axis === "x" ? [y0, y1] : [x0, x1];
    const gaps = [...wall.gaps].sort((a, b) => a.center - b.center);
    let cursor = lo;
    for (const gap of gaps) {
      const gapLo = gap.center - gap.halfwidth;
      const gapHi = gap.center + gap.halfwidth;
      if (gapLo > cursor) segments.push(wallSpan(wall.axis, wall.at, cursor, gapLo));
      cursor = Math.max(cursor, gapHi);
    }
    if (cursor < hi) segments.push(wallSpan(wall.axis, wall.at, cursor, hi));
  }
  return segments;
}

function wallSpan(axis: "x" | "y", at: number, lo: number, hi: number): [number[], number[]] {
  return axis === "x" ? [[at, lo], [at, hi]] : [[lo, at], [hi, at]];
}

/** All shapes for one query, in paint order. */
export function buildScene(query: WireQuery, width: number, height: number): Shape[] {
  const geometry = query.geometry;
  const bounds = geometry.bounds.length ? geometry.bounds : [[-0.5, -0.5], [0.5, 0.5]];
  const map = (p: number[]) => arenaToCanvas(p, bounds, width, height);
  const shapes: Shape[] = [];

  for (const [a, b] of wallSegments(geometry, bounds)) {
    const [x1, y1] = map(a);
    const [x2, y2] = map(b);
    shapes.push({ kind: "segment", x1, y1, x2, y2, color: WALL_COLOR, width: 3 });
  }
  if (geometry.start) {
    const [x, y] = map(geometry.start);
    shapes.push({ kind: "circle", x, y, radius: 5, color: START_COLOR, fill: true, label: "start" });
  }
  const goalPoint = geometry.goal ?? query.goal;
  if (goalPoint && goalPoint.length >= 2) {
    const [x, y] = map(goalPoint);
    shapes.push({ kind: "circle", x, y, radius: 7, color: GOAL_COLOR, fill: true, label: "goal" });
  }

  for (const [tuple, color, fill] of [
    [query.left, LEFT_COLOR, false],
    [query.right, RIGHT_COLOR, true],
  ] as const) {
    const statePoint = map(tuple.state.slice(0, 2));
    const subgoalPoint = map(tuple.subgoal.slice(0, 2));
    shapes.push({
      kind: "segment",
      x1: statePoint[0], y1: statePoint[1],
      x2: subgoalPoint[0], y2: subgoalPoint[1],
      color, width: 1, dashed: true,
    });
    shapes.push({ kind: "circle", x: statePoint[0], y: statePoint[1], radius: 4, color, fill });
    shapes.push({ kind: "circle", x: subgoalPoint[0], y: subgoalPoint[1], radius: 8, color, fill });
  }
  return shapes;
}

export function paint(ctx: CanvasRenderingContext2D, shapes: Shape[], width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#999999";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  for (const shape of shapes) {
    if (shape.kind === "segment") {
      ctx.strokeStyle = shape.color;
      ctx.lineWidth = shape.width;
      ctx.setLineDash(shape.dashed ? [4, 4] : []);
      ctx.beginPath();
      ctx.moveTo(shape.x1, shape.y1);
      ctx.lineTo(shape.x2, shape.y2);
      ctx.stroke();
      ctx.setLineDash([]);
    } else {
      ctx.beginPath();
      ctx.arc(shape.x, shape.y, shape.radius, 0, Math.PI * 2);
      if (shape.fill) {
        ctx.fillStyle = shape.color;
        ctx.fill();
      } else {
        ctx.strokeStyle = shape.color;
        ctx.lineWidth = 2;
        ctx.stroke();
      }
    }
  }
}
