/** Shared fixtures: a small fixed scene and frame builders. */

import type { Frame, Metrics, SceneData, SnapshotState } from "../src/types.js";

export const MINI_SCENE: SceneData = {
  grid: {
    width: 6,
    height: 4,
    resolution: 0.5,
    origin: [0, 0, 0],
    rows: ["######", "#....#", "#..#.#", "######"],
  },
  objects: [],
  landmarks: [
    {
      id: "A",
      pose: [0.75, 0.75, 0],
      description_tokens: ["door"],
      canonical_phrases: ["door"],
      detector_classes: [],
    },
    {
      id: "B",
      pose: [2.25, 1.25, 0],
      description_tokens: ["sofa"],
      canonical_phrases: ["sofa"],
      detector_classes: [],
    },
  ],
  routes: [{ start: [0.75, 1.25, 0], goal_landmark: "B" }],
};

export function makeState(over: Partial<SnapshotState> = {}): SnapshotState {
  return {
    mode: "Idle",
    time: 0,
    step: 0,
    robot: [0.75, 1.25, 0],
    user: [0.15, 1.25, 0],
    vel: [0, 0],
    goal: null,
    landmark: null,
    path: [],
    user_corners: [
      [0.45, 1.55],
      [0.45, 0.95],
      [-0.15, 0.95],
      [-0.15, 1.55],
    ],
    speed_limit: 0.4,
    robot_collisions: 0,
    user_collisions: 0,
    ...over,
  };
}

export function makeMetrics(over: Partial<Metrics> = {}): Metrics {
  return {
    robot_collisions: 0,
    user_collisions: 0,
    dispatched: [],
    arrivals: [],
    ...over,
  };
}

export function makeFrame(
  type: "snapshot" | "delta",
  step: number,
  over: Partial<Frame> = {},
): Frame {
  return {
    type,
    step,
    state: makeState({ step }),
    transcript: [],
    metrics: makeMetrics(),
    ...over,
  };
}

export function entry(speaker: string, text: string, mode = "Idle") {
  return { t: 0, speaker, text, mode, effects: [] };
}
