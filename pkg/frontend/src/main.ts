/** Console bootstrap: canvas, parameter panel, echo log, session wiring. */

import { SessionClient } from "./client.js";
import { DragController } from "./drag.js";
import { dragCommand, setParamCommand, simpleCommand } from "./protocol.js";
import { render, Scene } from "./render.js";
import { ViewState } from "./state.js";
import { fitViewport, Viewport } from "./transform.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const badge = document.getElementById("badge")!;
const echoList = document.getElementById("echo")!;
const paramForm = document.getElementById("params") as HTMLFormElement;

const state = new ViewState();
let scene: Scene | null = null;
let viewport: Viewport | null = null;
let lastGeneration = -1;
const trajectory: number[][] = [];

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/session`;
const client = new SessionClient(wsUrl, state, onChange);

function sceneFromHello(): void {
  const sc = state.hello!.scenario as Record<string, any>;
  scene = {
    wsMin: sc.workspace.min,
    wsMax: sc.workspace.max,
    start: sc.start,
    target: sc.target,
    rhoMin: sc.tube.rho_min,
    dims: sc.dims,
  };
  viewport = fitViewport(scene.wsMin, scene.wsMax, canvas.width, canvas.height);
}

const drag = new DragController({
  viewport: () => viewport!,
  snapshot: () => state.snapshot,
  wsMin: [],
  wsMax: [],
  sendDrag: (id, pos) => client.send(dragCommand(id, pos)),
  onSelect: (id) => {
    if (id === null) state.endDrag();
    else state.beginDrag(id);
  },
  onGhost: (pos) => state.moveGhost(pos),
  throttleMs: 33,
});

canvas.addEventListener("pointerdown", (e) => {
  if (!scene) return;
  (drag as any).deps.wsMin = scene.wsMin;
  (drag as any).deps.wsMax = scene.wsMax;
  const r = canvas.getBoundingClientRect();
  if (drag.pointerDown(e.clientX - r.left, e.clientY - r.top)) {
    canvas.setPointerCapture(e.pointerId);
  }
});
canvas.addEventListener("pointermove", (e) => {
  const r = canvas.getBoundingClientRect();
  drag.pointerMove(e.clientX - r.left, e.clientY - r.top);
});
canvas.addEventListener("pointerup", () => drag.pointerUp());

document.getElementById("pause")!.addEventListener("click", () =>
  client.send(simpleCommand("pause")));
document.getElementById("resume")!.addEventListener("click", () =>
  client.send(simpleCommand("resume")));
document.getElementById("reset")!.addEventListener("click", () =>
  client.send(simpleCommand("reset")));

paramForm.addEventListener("submit", (e) => {
  e.preventDefault();
  const path = (document.getElementById("param-path") as HTMLSelectElement).value;
  const valueText = (document.getElementById("param-value") as HTMLInputElement).value;
  const value = valueText.includes(",")
    ? valueText.split(",").map(Number)
    : Number(valueText);
  client.send(setParamCommand(path, value));
});

function onChange(): void {
  if (state.hello && !scene) {
    sceneFromHello();
    const sel = document.getElementById("param-path") as HTMLSelectElement;
    sel.innerHTML = "";
    for (const p of state.hello.adjustable) {
      const opt = document.createElement("option");
      opt.value = p;
      opt.textContent = p;
      sel.appendChild(opt);
    }
  }
  badge.textContent = state.connection === "live"
    ? (state.snapshot?.paused ? "paused" : "live")
    : state.connection;
  badge.className = `badge ${state.connection}`;
  if (state.snapshot) {
    if (state.snapshot.generation !== lastGeneration) {
      trajectory.length = 0;
      lastGeneration = state.snapshot.generation;
    }
    const y = state.snapshot.y;
    const last = trajectory[trajectory.length - 1];
    if (!last || Math.hypot(y[0] - last[0], y[1] - last[1]) > 0.01) {
      trajectory.push([y[0], y[1]]);
    }
  }
  echoList.innerHTML = state.echo.slice(-8).reverse()
    .map((e) => `<li class="${e.ok ? "ok" : "err"}">${e.message} ${e.detail}</li>`)
    .join("");
  requestRender();
}

let renderQueued = false;
function requestRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    if (scene && viewport && state.snapshot) {
      render(ctx, canvas.width, canvas.height, viewport, scene, state.snapshot,
             trajectory, state.ghost, state.selected);
    }
  });
}

client.connect();
