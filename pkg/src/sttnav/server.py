"""Live operator session: one paced simulation loop, many websocket clients.

The loop task owns all mutable state. Clients talk JSON frames
{type, seq, payload}: they send "command" frames (drag an obstacle, adjust a
whitelisted parameter, pause/resume/reset) and receive "hello", "snapshot",
"command" (ack), and "error" frames. Commands are queued and applied at the
next tick boundary, so a command acknowledged at tick T affects dynamics at
T+1 (never later than T+2). Snapshots are published at a fixed wall rate,
latest-wins per client; a slow client only ever misses intermediate frames.

Every applied command is recorded with its tick, so a finished session can
be replayed headlessly (sim.run_episode(commands=...)) to a bit-identical
log: the UI is replaceable by construction.
"""

from __future__ import annotations

import asyncio
import io
import json
import logging
import time
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .metrics import compute_metrics
from .recording import write_jsonl
from .scenario import Scenario, bundled_scenarios, load_scenario
from .sim import SET_PARAM_WHITELIST, EpisodeRunner

log = logging.getLogger("sttnav.server")

SNAPSHOT_HZ = 30.0
UNPACED_BATCH = 500
PACED_BATCH_CAP = 2000
DRAG_RATE_LIMIT = 2.0  # m/s; faster drags are rate-clamped and flagged


class _Client:
    """Per-client outbox: snapshots are a latest-wins slot (a slow client
    only misses intermediate frames), acks/errors are delivered reliably."""

    _next_id = 0

    def __init__(self):
        _Client._next_id += 1
        self.id = _Client._next_id
        self.reliable: list = []
        self.snapshot: Optional[dict] = None
        self.event = asyncio.Event()

    def offer(self, frame: dict) -> None:
        if frame["type"] == "snapshot":
            self.snapshot = frame
        else:
            self.reliable.append(frame)
        self.event.set()

    async def next_frame(self) -> dict:
        while True:
            if self.reliable:
                return self.reliable.pop(0)
            if self.snapshot is not None:
                frame, self.snapshot = self.snapshot, None
                return frame
            self.event.clear()
            await self.event.wait()


class Session:
    def __init__(self, scenario: Scenario, time_scale: float = 1.0,
                 snapshot_hz: float = SNAPSHOT_HZ,
                 drag_rate_limit: float = DRAG_RATE_LIMIT,
                 start_paused: bool = False):
        self.scenario = scenario
        self.time_scale = time_scale
        self.snapshot_hz = snapshot_hz
        self.drag_rate_limit = drag_rate_limit
        self.runner = EpisodeRunner(scenario, record_obstacles=True,
                                    drag_rate_limit=drag_rate_limit)
        self.commands: asyncio.Queue = asyncio.Queue()
        self.clients: dict = {}
        self.paused = start_paused
        self.seq = 0
        self.generation = 0
        self.finished_log = None
        self.final_metrics = None
        self._stop = False

    # -- client management (called from websocket handlers) --

    def register(self) -> _Client:
        c = _Client()
        self.clients[c.id] = c
        return c

    def offer_snapshot(self, client: _Client) -> None:
        client.offer(self._snapshot_frame())

    def unregister(self, client: _Client) -> None:
        self.clients.pop(client.id, None)

    def hello_frame(self) -> dict:
        sc = self.scenario
        return self._frame("hello", {
            "scenario": sc.raw,
            "dims": sc.task.dims,
            "dt": sc.dt,
            "t_c": sc.task.t_c,
            "snapshot_hz": self.snapshot_hz,
            "adjustable": list(SET_PARAM_WHITELIST),
            "drag_rate_limit": self.drag_rate_limit,
        })

    async def submit(self, client: _Client, payload: dict) -> None:
        await self.commands.put((client, payload))

    # -- frames --

    def _frame(self, kind: str, payload: dict) -> dict:
        self.seq += 1
        return {"type": kind, "seq": self.seq, "payload": payload}

    def _snapshot_frame(self) -> dict:
        r = self.runner
        i = r.i
        centers, radii = (r.field.table.eval(i * r.scenario.dt)
                          if r.field.n_o else (np.zeros((0, r.plant.n)), np.zeros(0)))
        status = "Running" if not r.done else (self.finished_log.status
                                               if self.finished_log else "Finishing")
        payload = {
            "tick": i,
            "t": i * r.scenario.dt,
            "generation": self.generation,
            "paused": self.paused,
            "status": status,
            "sigma": [float(v) for v in r.sigma],
            "rho": float(r.rho),
            "y": [float(v) for v in r.x[0]],
            "e1": float(r.e1_buf[i - 1]) if i else 0.0,
            "obstacles": [{"id": int(r.field.ids[j]),
                           "center": [float(v) for v in centers[j]],
                           "radius": float(radii[j])} for j in range(r.field.n_o)],
            "events": len(r.events),
            "metrics": self.final_metrics,
        }
        return self._frame("snapshot", payload)

    def _broadcast(self) -> None:
        frame = self._snapshot_frame()
        for c in self.clients.values():
            c.offer(frame)

    # -- command application (loop task only) --

    def _drain_commands(self) -> None:
        while not self.commands.empty():
            client, payload = self.commands.get_nowait()
            self._handle_command(client, payload)

    def _handle_command(self, client: Optional[_Client], payload: dict) -> None:
        kind = payload.get("kind")
        tick = self.runner.i
        if kind == "pause":
            self.paused = True
            ok, msg = True, "paused"
        elif kind == "resume":
            self.paused = False
            ok, msg = True, "resumed"
        elif kind == "reset":
            name = payload.get("scenario")
            try:
                sc = load_scenario(name) if name else self.scenario
                self._reset(sc)
                ok, msg = True, "reset"
            except Exception as exc:
                ok, msg = False, str(exc)
        elif self.runner.done:
            ok, msg = False, "session finished"
        else:
            ok, msg = self.runner.apply_command(payload)
        if client is not None:
            frame = self._frame("command" if ok else "error",
                                {"tick": tick, "ok": ok, "message": msg, "echo": payload})
            client.offer(frame)

    def _reset(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.runner = EpisodeRunner(scenario, record_obstacles=True,
                                    drag_rate_limit=self.drag_rate_limit)
        self.finished_log = None
        self.final_metrics = None
        self.paused = False
        self.generation += 1

    # -- the loop --

    async def run(self) -> None:
        dt = self.runner.scenario.dt
        last_wall = time.perf_counter()
        carry = 0.0
        snap_period = 1.0 / self.snapshot_hz if self.snapshot_hz > 0 else 0.0
        next_snap = time.perf_counter()
        unpaced_since_snap = 0
        while not self._stop:
            self._drain_commands()
            if self.paused:
                self._broadcast()
                await asyncio.sleep(0.05)
                last_wall = time.perf_counter()
                carry = 0.0
                continue
            if self.runner.done:
                if self.finished_log is None:
                    self._finish()
                self._broadcast()
                await asyncio.sleep(0.1)
                last_wall = time.perf_counter()
                continue

            if self.time_scale <= 0.0:
                n_ticks = UNPACED_BATCH
            else:
                now = time.perf_counter()
                budget = (now - last_wall) * self.time_scale + carry
                last_wall = now
                n_ticks = int(budget / dt)
                carry = budget - n_ticks * dt
                if n_ticks > PACED_BATCH_CAP:
                    n_ticks = PACED_BATCH_CAP  # can't keep real time; don't spiral
                    carry = 0.0
            for _ in range(n_ticks):
                if not self.runner.tick():
                    break
                dt = self.runner.scenario.dt
            now = time.perf_counter()
            if self.time_scale <= 0.0:
                unpaced_since_snap += n_ticks
                if unpaced_since_snap >= UNPACED_BATCH:
                    self._broadcast()
                    unpaced_since_snap = 0
                await asyncio.sleep(0)
            else:
                if now >= next_snap:
                    self._broadcast()
                    next_snap = now + snap_period
                await asyncio.sleep(min(0.002, dt / max(self.time_scale, 1e-9)))

    def _finish(self) -> None:
        self.finished_log = self.runner.finish()
        self.final_metrics = compute_metrics(self.finished_log).as_dict()
        self._broadcast()

    def stop(self) -> None:
        self._stop = True

    # -- artifacts --

    def replay_jsonl(self) -> str:
        if self.finished_log is None:
            raise RuntimeError("session not finished")
        buf = io.StringIO()
        write_jsonl(self.finished_log, buf)
        return buf.getvalue()

    def command_schedule(self) -> list:
        src = self.finished_log.command_log if self.finished_log is not None \
            else self.runner.command_log
        return [[t, dict(cmd)] for t, cmd in src]


def create_app(scenario: Scenario, time_scale: float = 1.0,
               snapshot_hz: float = SNAPSHOT_HZ, start_paused: bool = False) -> FastAPI:
    session = Session(scenario, time_scale=time_scale, snapshot_hz=snapshot_hz,
                      start_paused=start_paused)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app_: FastAPI):
        task = asyncio.get_event_loop().create_task(session.run())
        app_.state.loop_task = task
        try:
            yield
        finally:
            session.stop()
            task.cancel()

    app = FastAPI(title="sttnav session", lifespan=lifespan)
    app.state.session = session

    @app.get("/scenarios")
    def scenarios():
        return {"scenarios": bundled_scenarios()}

    @app.get("/log")
    def replay_log():
        from fastapi.responses import PlainTextResponse
        try:
            return PlainTextResponse(session.replay_jsonl())
        except RuntimeError as exc:
            from fastapi.responses import JSONResponse
            return JSONResponse({"error": str(exc)}, status_code=409)

    @app.get("/commands")
    def commands():
        return {"commands": session.command_schedule()}

    @app.websocket("/session")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        client = session.register()
        await ws.send_json(session.hello_frame())
        session.offer_snapshot(client)

        async def sender():
            while True:
                frame = await client.next_frame()
                await ws.send_json(frame)

        send_task = asyncio.get_event_loop().create_task(sender())
        try:
            while True:
                try:
                    msg = await ws.receive_json()
                except (json.JSONDecodeError, ValueError):
                    client.offer({"type": "error", "seq": -1,
                                  "payload": {"ok": False, "message": "malformed frame"}})
                    continue
                if msg.get("type") == "command" and isinstance(msg.get("payload"), dict):
                    await session.submit(client, msg["payload"])
                else:
                    client.offer({"type": "error", "seq": -1,
                                  "payload": {"ok": False,
                                              "message": "expected a command frame"}})
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            session.unregister(client)

    return app
