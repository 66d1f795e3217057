/**
 * Wire protocol: JSON frames {type, seq, payload} over one websocket.
 * Malformed frames are dropped by returning null from the parser; the
 * caller degrades the connection badge rather than crashing the console.
 */

export interface ObstacleView {
  id: number;
  center: number[];
  radius: number;
}

export interface Snapshot {
  tick: number;
  t: number;
  generation: number;
  paused: boolean;
  status: string;
  sigma: number[];
  rho: number;
  y: number[];
  e1: number;
  obstacles: ObstacleView[];
  events: number;
  metrics: Record<string, unknown> | null;
}

export interface Hello {
  scenario: Record<string, unknown>;
  dims: number;
  dt: number;
  t_c: number;
  snapshot_hz: number;
  adjustable: string[];
  drag_rate_limit: number;
}

export interface CommandAck {
  tick: number;
  ok: boolean;
  message: string;
  echo: Record<string, unknown>;
}

export type Frame =
  | { type: "hello"; seq: number; payload: Hello }
  | { type: "snapshot"; seq: number; payload: Snapshot }
  | { type: "command"; seq: number; payload: CommandAck }
  | { type: "error"; seq: number; payload: CommandAck };

function isNumArray(v: unknown, n?: number): v is number[] {
  return Array.isArray(v) && v.every((x) => typeof x === "number" && isFinite(x)) &&
    (n === undefined || v.length === n);
}

export function parseFrame(raw: string): Frame | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as { type?: unknown; seq?: unknown; payload?: unknown };
  if (typeof m.type !== "string" || typeof m.seq !== "number" ||
      typeof m.payload !== "object" || m.payload === null) {
    return null;
  }
  const p = m.payload as Record<string, unknown>;
  switch (m.type) {
    case "snapshot": {
      if (!isNumArray(p.sigma) || !isNumArray(p.y) || typeof p.rho !== "number" ||
          typeof p.tick !== "number" || !Array.isArray(p.obstacles)) {
        return null;
      }
      for (const o of p.obstacles as unknown[]) {
        const ob = o as Record<string, unknown>;
        if (typeof ob.id !== "number" || !isNumArray(ob.center) ||
            typeof ob.radius !== "number") {
          return null;
        }
      }
      return { type: "snapshot", seq: m.seq, payload: p as unknown as Snapshot };
    }
    case "hello":
      if (typeof p.dims !== "number" || typeof p.dt !== "number") return null;
      return { type: "hello", seq: m.seq, payload: p as unknown as Hello };
    case "command":
    case "error":
      if (typeof p.ok !== "boolean" || typeof p.message !== "string") return null;
      return { type: m.type, seq: m.seq, payload: p as unknown as CommandAck };
    default:
      return null;
  }
}

export function dragCommand(id: number, position: number[]): string {
  return JSON.stringify({ type: "command", payload: { kind: "drag", id, position } });
}

export function setParamCommand(path: string, value: number | number[]): string {
  return JSON.stringify({ type: "command", payload: { kind: "set_param", path, value } });
}

export function simpleCommand(kind: "pause" | "resume" | "reset"): string {
  return JSON.stringify({ type: "command", payload: { kind } });
}
