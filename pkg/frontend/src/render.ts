/** Canvas map drawing.
 *
 * Pure functions over a minimal drawing interface so tests can record the
 * command stream instead of rasterizing.  World frame: x right, y up,
 * grid row 0 at the bottom; the canvas axis points down, so y flips once
 * here and nowhere else.  Scene origins are treated as axis-aligned.
 */

import type { SceneData, SnapshotState } from "./types.js";

export interface Draw2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillText(text: string, x: number, y: number): void;
}

export const COLORS = {
  floor: "#f8f6f0",
  wall: "#4a4a55",
  landmark: "#b03a48",
  label: "#222222",
  path: "#2a7ab0",
  goal: "#2a7ab0",
  user: "#d9862c",
  robot: "#1f7a4d",
};

export function canvasSize(scene: SceneData, scale: number): [number, number] {
  const { width, height, resolution } = scene.grid;
  return [width * resolution * scale, height * resolution * scale];
}

function mapper(scene: SceneData, scale: number) {
  const { height, resolution, origin } = scene.grid;
  const top = height * resolution;
  return (x: number, y: number): [number, number] => [
    (x - origin[0]) * scale,
    (top - (y - origin[1])) * scale,
  ];
}

function polyline(ctx: Draw2D, points: [number, number][], close: boolean): void {
  ctx.beginPath();
  points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
  if (close) {
    ctx.closePath();
  }
}

export function drawScene(ctx: Draw2D, scene: SceneData, scale: number): void {
  const [w, h] = canvasSize(scene, scale);
  const cell = scene.grid.resolution * scale;
  ctx.fillStyle = COLORS.floor;
  ctx.fillRect(0, 0, w, h);
  ctx.fillStyle = COLORS.wall;
  scene.grid.rows.forEach((row, j) => {
    for (let i = 0; i < row.length; i += 1) {
      if (row[i] === "#") {
        ctx.fillRect(i * cell, h - (j + 1) * cell, cell, cell);
      }
    }
  });
  const toPx = mapper(scene, scale);
  ctx.font = `${Math.round(0.4 * scale)}px sans-serif`;
  for (const landmark of scene.landmarks) {
    const [x, y] = toPx(landmark.pose[0], landmark.pose[1]);
    const r = 0.18 * scale;
    ctx.fillStyle = COLORS.landmark;
    polyline(
      ctx,
      [
        [x, y - r],
        [x + r, y],
        [x, y + r],
        [x - r, y],
      ],
      true,
    );
    ctx.fill();
    ctx.fillStyle = COLORS.label;
    ctx.fillText(landmark.id, x + r, y - r);
  }
}

export function drawState(
  ctx: Draw2D,
  scene: SceneData,
  state: SnapshotState,
  scale: number,
): void {
  const toPx = mapper(scene, scale);
  if (state.path.length > 1) {
    ctx.strokeStyle = COLORS.path;
    ctx.lineWidth = 2;
    polyline(
      ctx,
      state.path.map(([x, y]) => toPx(x, y)),
      false,
    );
    ctx.stroke();
  }
  if (state.goal !== null) {
    const [gx, gy] = toPx(state.goal[0], state.goal[1]);
    ctx.strokeStyle = COLORS.goal;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(gx, gy, 0.3 * scale, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.strokeStyle = COLORS.user;
  ctx.lineWidth = 2;
  polyline(
    ctx,
    state.user_corners.map(([x, y]) => toPx(x, y)),
    true,
  );
  ctx.stroke();
  const [rx, ry, rtheta] = state.robot;
  const nose = 0.25 * scale;
  const tail = 0.15 * scale;
  // Canvas y points down, so world heading theta maps to angle -theta.
  const tip = (angle: number, radius: number): [number, number] => {
    const [cx, cy] = toPx(rx, ry);
    return [cx + radius * Math.cos(-rtheta + angle), cy + radius * Math.sin(-rtheta + angle)];
  };
  ctx.fillStyle = COLORS.robot;
  polyline(ctx, [tip(0, nose), tip((2.5 * Math.PI) / 3, tail), tip((-2.5 * Math.PI) / 3, tail)], true);
  ctx.fill();
}

export function drawFrame(
  ctx: Draw2D,
  scene: SceneData,
  state: SnapshotState,
  scale: number,
): void {
  drawScene(ctx, scene, scale);
  drawState(ctx, scene, state, scale);
}
