/** Canvas drawing. Takes the minimal 2D-context surface it needs, so tests
 * can drive it with a recording stub. 3D scenarios render the XY top-down
 * projection plus an altitude strip on the right edge. */

import { Ghost } from "./state.js";
import { Snapshot } from "./protocol.js";
import { Viewport, toScreen } from "./transform.js";

export interface Ctx2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fill(): void;
  setLineDash(d: number[]): void;
  fillText(s: string, x: number, y: number): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
}

export interface Scene {
  wsMin: number[];
  wsMax: number[];
  start: { center: number[]; radius: number };
  target: { center: number[]; radius: number };
  rhoMin: number;
  dims: number;
}

const COLORS = {
  workspace: "#888",
  start: "#2e7d32",
  target: "#1565c0",
  tube: "#7b1fa2",
  output: "#d32f2f",
  trajectory: "#d32f2f",
  obstacle: "#37474f",
  halo: "#b0bec5",
  ghost: "#fb8c00",
};

export function render(
  ctx: Ctx2D, width: number, height: number, vp: Viewport,
  scene: Scene, snap: Snapshot, trajectory: number[][],
  ghost: Ghost | null, selected: number | null,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.globalAlpha = 1;

  const box0 = toScreen(vp, [scene.wsMin[0], scene.wsMax[1]]);
  ctx.beginPath();
  ctx.rect(box0[0], box0[1],
           (scene.wsMax[0] - scene.wsMin[0]) * vp.scale,
           (scene.wsMax[1] - scene.wsMin[1]) * vp.scale);
  ctx.strokeStyle = COLORS.workspace;
  ctx.lineWidth = 1;
  ctx.setLineDash([]);
  ctx.stroke();

  circle(ctx, vp, scene.start.center, scene.start.radius, COLORS.start, false, [6, 4]);
  circle(ctx, vp, scene.target.center, scene.target.radius, COLORS.target, false, [6, 4]);

  for (const o of snap.obstacles) {
    circle(ctx, vp, o.center, o.radius + scene.rhoMin, COLORS.halo, false, [3, 3]);
    circle(ctx, vp, o.center, o.radius, COLORS.obstacle, true);
    if (o.id === selected) {
      circle(ctx, vp, o.center, o.radius + 0.08, COLORS.ghost, false, []);
    }
  }

  if (ghost) {
    ctx.globalAlpha = 0.45;
    circle(ctx, vp, ghost.position, 0.12, COLORS.ghost, true, [2, 2]);
    ctx.globalAlpha = 1;
  }

  if (trajectory.length > 1) {
    ctx.beginPath();
    const p0 = toScreen(vp, trajectory[0]);
    ctx.moveTo(p0[0], p0[1]);
    for (const p of trajectory.slice(1)) {
      const q = toScreen(vp, p);
      ctx.lineTo(q[0], q[1]);
    }
    ctx.strokeStyle = COLORS.trajectory;
    ctx.lineWidth = 1;
    ctx.setLineDash([]);
    ctx.stroke();
  }

  circle(ctx, vp, snap.sigma, snap.rho, COLORS.tube, false, []);
  circle(ctx, vp, snap.y, 0.06, COLORS.output, true);

  if (scene.dims === 3) {
    altitudeStrip(ctx, width, height, scene, snap);
  }

  ctx.fillStyle = "#000";
  ctx.font = "12px sans-serif";
  ctx.fillText(
    `t=${snap.t.toFixed(2)}s  rho=${snap.rho.toFixed(3)}  e1=${snap.e1.toFixed(3)}  ${snap.status}`,
    8, 14);
}

function circle(
  ctx: Ctx2D, vp: Viewport, center: number[], radius: number,
  color: string, filled: boolean, dash: number[] = [],
): void {
  const [x, y] = toScreen(vp, center);
  ctx.beginPath();
  ctx.arc(x, y, Math.max(radius * vp.scale, 1.5), 0, 2 * Math.PI);
  ctx.setLineDash(dash);
  if (filled) {
    ctx.fillStyle = color;
    ctx.fill();
  } else {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function altitudeStrip(
  ctx: Ctx2D, width: number, height: number, scene: Scene, snap: Snapshot,
): void {
  const x = width - 28;
  const top = 20;
  const h = height - 40;
  const zLo = scene.wsMin[2];
  const zHi = scene.wsMax[2];
  const zPix = (z: number) => top + h * (1 - (z - zLo) / (zHi - zLo));
  ctx.beginPath();
  ctx.rect(x, top, 16, h);
  ctx.strokeStyle = COLORS.workspace;
  ctx.lineWidth = 1;
  ctx.stroke();
  // tube altitude band [sigma_z - rho, sigma_z + rho]
  ctx.beginPath();
  ctx.rect(x + 1, zPix(snap.sigma[2] + snap.rho), 14,
           Math.max(zPix(snap.sigma[2] - snap.rho) - zPix(snap.sigma[2] + snap.rho), 1));
  ctx.fillStyle = COLORS.tube;
  ctx.globalAlpha = 0.3;
  ctx.fill();
  ctx.globalAlpha = 1;
  ctx.beginPath();
  ctx.arc(x + 8, zPix(snap.y[2]), 3, 0, 2 * Math.PI);
  ctx.fillStyle = COLORS.output;
  ctx.fill();
}
