/** Payload shapes mirrored from the session service; see docs/openapi.json. */

export interface GridData {
  width: number;
  height: number;
  resolution: number;
  origin: number[];
  rows: string[];
}

export interface LandmarkData {
  id: string;
  pose: number[];
  description_tokens: string[];
  canonical_phrases: string[];
  detector_classes: string[];
}

export interface RouteData {
  start: number[];
  goal_landmark: string;
}

export interface SceneData {
  grid: GridData;
  objects: unknown[];
  landmarks: LandmarkData[];
  routes: RouteData[];
}

export interface SnapshotState {
  mode: string;
  time: number;
  step: number;
  robot: number[];
  user: number[];
  vel: number[];
  goal: number[] | null;
  landmark: string | null;
  path: number[][];
  user_corners: number[][];
  speed_limit: number;
  robot_collisions: number;
  user_collisions: number;
}

export interface TranscriptEntry {
  t: number;
  speaker: string;
  text: string;
  mode: string;
  effects: unknown[];
}

export interface Metrics {
  robot_collisions: number;
  user_collisions: number;
  dispatched: string[];
  arrivals: [string | null, number][];
}

export interface Frame {
  type: "snapshot" | "delta";
  step: number;
  state: SnapshotState;
  transcript: TranscriptEntry[];
  metrics: Metrics;
}

export interface UtteranceReply {
  reply: string;
  mode: string;
  effects: unknown[][];
}

export interface AdvanceReply {
  state: SnapshotState;
  notices: string[];
}
