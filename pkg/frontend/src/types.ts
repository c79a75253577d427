// Wire types of the annotation API (version 1).

export interface TupleView {
  state: number[];
  subgoal: number[];
}

export interface WallGap {
  center: number;
  halfwidth: number;
}

export interface WallView {
  axis: "x" | "y";
  at: number;
  gaps: WallGap[];
}

export interface GeometryView {
  bounds: number[][];
  walls: WallView[];
  start: number[] | null;
  goal: number[] | null;
}

export interface WireQuery {
  id: string;
  env: string;
  left: TupleView;
  right: TupleView;
  goal: number[];
  geometry: GeometryView;
  created_episode: number;
}

export interface StatusView {
  version: string;
  pending: number;
  episode: number;
  k: number;
  alpha: number;
  subgoal_success_rate: number;
  labels_total: number;
}

export type LabelValue = 0 | 0.5 | 1;
