/** Pointer-to-command plumbing: hit-test to select an obstacle, stream
 * throttled drag commands while the pointer moves, clamp targets to the
 * workspace client-side, end the stream on release. */

import { Snapshot } from "./protocol.js";
import { Throttle } from "./throttle.js";
import { Viewport, clampToBox, toWorld } from "./transform.js";

export function hitTestObstacle(
  snap: Snapshot, world: [number, number], slackM = 0.15,
): number | null {
  let best: number | null = null;
  let bestDist = Infinity;
  for (const o of snap.obstacles) {
    const d = Math.hypot(o.center[0] - world[0], o.center[1] - world[1]);
    if (d <= o.radius + slackM && d < bestDist) {
      best = o.id;
      bestDist = d;
    }
  }
  return best;
}

export interface DragDeps {
  viewport: () => Viewport;
  snapshot: () => Snapshot | null;
  wsMin: number[];
  wsMax: number[];
  sendDrag: (id: number, position: number[]) => void;
  onSelect: (id: number | null) => void;
  onGhost: (position: number[]) => void;
  throttleMs: number;
}

export class DragController {
  private active: number | null = null;
  private throttle: Throttle<number[]>;

  constructor(private readonly deps: DragDeps) {
    this.throttle = new Throttle(deps.throttleMs, (pos) => {
      if (this.active !== null) {
        deps.sendDrag(this.active, pos);
      }
    });
  }

  pointerDown(px: number, py: number): boolean {
    const snap = this.deps.snapshot();
    if (!snap) return false;
    const world = toWorld(this.deps.viewport(), px, py);
    const id = hitTestObstacle(snap, world);
    this.active = id;
    this.deps.onSelect(id);
    return id !== null;
  }

  pointerMove(px: number, py: number): void {
    if (this.active === null) return;
    const world = toWorld(this.deps.viewport(), px, py);
    const target = clampToBox([world[0], world[1]], this.deps.wsMin, this.deps.wsMax);
    // 3D scenarios drag in the top-down plane; altitude is kept
    const snap = this.deps.snapshot();
    const ob = snap?.obstacles.find((o) => o.id === this.active);
    const full = ob && ob.center.length === 3 ? [...target, ob.center[2]] : target;
    this.deps.onGhost(full);
    this.throttle.push(full);
  }

  pointerUp(): void {
    this.throttle.flush();
    this.active = null;
    this.deps.onSelect(null);
  }

  get dragging(): boolean {
    return this.active !== null;
  }
}
