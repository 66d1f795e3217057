/** World <-> screen mapping: fit the workspace box into the canvas with a
 * uniform scale, y-axis flipped so world-up is screen-up. */

export interface Viewport {
  scale: number;   // px per m
  ox: number;      // px offset of world x=0
  oy: number;      // px offset of world y=0 (before flip)
  height: number;  // canvas px height
}

export function fitViewport(
  wsMin: number[], wsMax: number[], width: number, height: number,
  marginPx = 20,
): Viewport {
  const w = wsMax[0] - wsMin[0];
  const h = wsMax[1] - wsMin[1];
  const scale = Math.min((width - 2 * marginPx) / w, (height - 2 * marginPx) / h);
  const ox = marginPx + (width - 2 * marginPx - w * scale) / 2 - wsMin[0] * scale;
  const oy = marginPx + (height - 2 * marginPx - h * scale) / 2 - wsMin[1] * scale;
  return { scale, ox, oy, height };
}

export function toScreen(v: Viewport, p: number[]): [number, number] {
  return [v.ox + p[0] * v.scale, v.height - (v.oy + p[1] * v.scale)];
}

export function toWorld(v: Viewport, px: number, py: number): [number, number] {
  return [(px - v.ox) / v.scale, (v.height - py - v.oy) / v.scale];
}

export function clampToBox(p: number[], lo: number[], hi: number[]): number[] {
  return p.map((x, i) => Math.min(Math.max(x, lo[i]), hi[i]));
}
