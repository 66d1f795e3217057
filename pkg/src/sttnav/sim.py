"""Fixed-step closed-loop episode runner.

Per tick: advance the tube one dt (observing obstacles at every stage time),
evaluate the control law against the advanced tube, integrate the plant with
the input held, record. The tube+controller evaluation is wall-clock timed;
plant stepping and recording are excluded from that figure so the reported
per-tick cost is the method's own.

Live commands (obstacle drags, whitelisted parameter changes) are applied at
tick boundaries only, and every applied command is recorded with its tick so
a session can be replayed headlessly to an identical log.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field as dfield
from typing import Optional

import numpy as np

from . import _fast
from .controller import ControlLoop, resolve_funnels
from .env import observe, validate
from .plant import DisturbanceSampler, step_plant
from .scenario import Scenario, ScenarioError
from .tube import (TubeConfig, TubeState, TubeStepper, initial_state,
                   rho_lower_bound, smooth_min_distance)

log = logging.getLogger("sttnav.sim")

SUCCESS = "Success"
COLLISION = "Collision"
MARGIN_BREACH = "MarginBreach"
TUBE_EXIT = "TubeExit"
FUNNEL_EXIT = "FunnelExit"
NUMERIC_ABORT = "NumericAbort"
TARGET_MISS = "TargetMiss"

ASSUMPTION2_SAMPLE_EVERY = 100

SET_PARAM_WHITELIST = (
    "tube.k1", "tube.k2", "tube.k3", "tube.nu", "tube.rho_min", "tube.rho_max",
    "controller.kappa", "disturbance.bound",
)


@dataclass
class EpisodeLog:
    """Struct-of-arrays record of one episode. Row i is the state at t=i*dt;
    input-side columns at row i were computed at the tick starting there
    (the final row's input columns are NaN)."""

    scenario: Scenario
    status: str
    t: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    x: np.ndarray              # (rows, N, n); y = x[:, 0]
    tube_cfg: TubeConfig       # effective config at episode end (live SetParam aware)
    d: np.ndarray              # smooth-min sensed distance at (t, sigma)
    min_gap: np.ndarray        # min sensed gap from sigma (inf if none)
    y_min_gap: np.ndarray      # min gap from the output to any obstacle
    u: np.ndarray
    e1: np.ndarray
    r: Optional[np.ndarray]    # (rows, N-1, n) stage references, N >= 2
    gamma: Optional[np.ndarray]
    compute_ns: np.ndarray     # tube+controller wall time per tick (volatile)
    substeps: np.ndarray
    events: list               # (tick, kind, detail)
    command_log: list          # (tick, command-dict-as-applied)
    obstacle_centers: Optional[np.ndarray] = None  # (rows, n_o, n) when recorded
    obstacle_radii: Optional[np.ndarray] = None
    validation_notes: list = dfield(default_factory=list)

    @property
    def y(self) -> np.ndarray:
        return self.x[:, 0, :]

    @property
    def rows(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return self.scenario.dt


class EpisodeRunner:
    """Owns all mutable per-episode state; one logical thread of execution."""

    def __init__(self, scenario: Scenario, force: bool = False,
                 record_obstacles: bool = False, drag_rate_limit: float = 2.0):
        sc = scenario
        self.scenario = sc
        self.field = sc.build_field()
        report = validate(sc.task, self.field, sc.tube)
        if not report.ok and not force:
            raise ScenarioError(f"scenario invalid: {report}")
        self.validation = report

        steps = sc.task.t_c / sc.dt
        self.n_ticks = int(round(steps))
        if abs(steps - self.n_ticks) > 1e-6 * max(1.0, steps) or self.n_ticks < 1:
            raise ScenarioError("t_c must be a positive integer multiple of dt")

        self.plant = sc.build_plant()
        self.tube_cfg = sc.tube
        tube0 = initial_state(sc.task, self.field, self.tube_cfg)
        self.x = self.plant.initial_state(sc.task.start.center)
        ctrl_cfg = resolve_funnels(sc.controller, self.x, tube0)
        self.ctrl_cfg = ctrl_cfg
        self.ctrl = ControlLoop(ctrl_cfg, self.plant.n)
        self.stepper = TubeStepper(sc.task, self.field, self.tube_cfg, sc.dt)
        self.rho_lb = rho_lower_bound(self.tube_cfg)

        self._zero_w = np.zeros((self.plant.n_stages, self.plant.n))
        self._plant_step = self._make_plant_step()
        self.disturbance_bound = sc.disturbance_bound
        sampler_seed = sc.disturbance_seed if sc.disturbance_seed is not None else sc.seed
        self.sampler = DisturbanceSampler(1.0, sampler_seed)
        # Unit draws scaled by the (possibly live-adjusted) bound each tick,
        # so a mid-run bound change stays deterministic.
        if self.disturbance_bound > 0.0:
            self._w_unit = self.sampler.draw_block(self.n_ticks, self.plant.n_stages, self.plant.n)
        else:
            self._w_unit = None

        rows = self.n_ticks + 1
        n, n_stages = self.plant.n, self.plant.n_stages
        self.t_buf = np.arange(rows) * sc.dt
        self.t_buf[-1] = sc.task.t_c
        self.sigma_buf = np.empty((rows, n))
        self.rho_buf = np.empty(rows)
        self.x_buf = np.empty((rows, n_stages, n))
        self.d_buf = np.empty(rows)
        self.min_gap_buf = np.empty(rows)
        self.y_min_gap_buf = np.empty(rows)
        self.u_buf = np.full((rows, n), np.nan)
        self.e1_buf = np.full(rows, np.nan)
        self.compute_buf = np.zeros(rows, dtype=np.int64)
        self.substep_buf = np.zeros(rows, dtype=np.int32)
        if n_stages > 1:
            self.r_buf = np.full((rows, n_stages - 1, n), np.nan)
            self.gamma_buf = np.full((rows, n_stages - 1, n), np.nan)
        else:
            self.r_buf = self.gamma_buf = None
        self.record_obstacles = record_obstacles
        if record_obstacles:
            self.obs_c_buf = np.empty((rows, self.field.n_o, n))
            self.obs_r_buf = np.empty((rows, self.field.n_o))
        else:
            self.obs_c_buf = self.obs_r_buf = None

        self.events: list = []
        self.command_log: list = []
        self.drag_rate_limit = drag_rate_limit
        self._last_drag_tick: dict = {}
        self._workspace_exit_logged = False
        self._status_override: Optional[str] = None
        self._clamp_seen = {TUBE_EXIT: False, FUNNEL_EXIT: False}

        self.sigma = tube0.sigma.copy()
        self.rho = tube0.rho
        obs0 = observe(self.field, 0.0, self.sigma)
        d0 = smooth_min_distance(obs0.gaps, sc.tube.nu)
        self._fill_state_row(0, self.sigma, self.rho, self.x, d0, obs0.min_gap)
        self.i = 0
        self.done = False

    # -- commands --

    def apply_command(self, cmd: dict):
        """Apply one live command at the current tick boundary. Returns
        (ok, message). Applied commands are recorded for replay."""
        kind = cmd.get("kind")
        t = self.i * self.scenario.dt
        if kind == "drag":
            try:
                idx = self.field.index_of(int(cmd["id"]))
            except (KeyError, ValueError, TypeError) as exc:
                return False, f"bad drag command: {exc}"
            pos = np.asarray(cmd.get("position"), dtype=float)
            if pos.shape != (self.scenario.task.dims,) or not np.isfinite(pos).all():
                return False, "drag position must be a finite workspace point"
            task = self.scenario.task
            if np.any(pos < task.workspace_min) or np.any(pos > task.workspace_max):
                return False, "drag position outside the workspace"
            current = self.field.table.override_position(idx)
            if current is None:
                centers, _ = self.field.table.eval(t)
                current = centers[idx].copy()
            last = self._last_drag_tick.get(idx)
            dt_cmd = (self.i - last) * self.scenario.dt if last is not None else self.scenario.dt
            dt_cmd = max(dt_cmd, self.scenario.dt)
            limit = self.drag_rate_limit * dt_cmd
            requested = pos.copy()
            delta = pos - current
            dist = float(np.linalg.norm(delta))
            clamped = dist > limit
            if clamped:
                pos = current + delta * (limit / dist)
                self.events.append((self.i, "drag_rate_clamped", int(cmd["id"])))
            self.field.table.set_override(idx, pos)
            self._last_drag_tick[idx] = self.i
            # the command log records the request: replaying it re-derives the
            # same clamp decision, so events reproduce too
            self.command_log.append((self.i, {"kind": "drag", "id": int(cmd["id"]),
                                              "position": [float(v) for v in requested]}))
            return True, "clamped" if clamped else "ok"
        if kind == "set_param":
            return self._apply_set_param(cmd)
        return False, f"unknown command kind {kind!r}"

    def _apply_set_param(self, cmd: dict):
        path, value = cmd.get("path"), cmd.get("value")
        if path not in SET_PARAM_WHITELIST:
            return False, f"parameter {path!r} is not adjustable"
        sc = self.scenario
        try:
            if path == "disturbance.bound":
                v = float(value)
                if v < 0.0:
                    return False, "disturbance bound must be nonnegative"
                if v > 0.0 and self._w_unit is None:
                    self._w_unit = self.sampler.draw_block(
                        self.n_ticks, self.plant.n_stages, self.plant.n)
                self.disturbance_bound = v
            elif path == "controller.kappa":
                kappa = np.atleast_1d(np.asarray(value, dtype=float))
                cfg = resolve_funnels(
                    type(self.ctrl_cfg)(kappa, self.ctrl_cfg.funnels, self.ctrl_cfg.eps_err),
                    self.x, _tube_state(self))
                self.ctrl_cfg = cfg
                self.ctrl = ControlLoop(cfg, self.plant.n)
            else:
                cur = self.tube_cfg
                field_name = path.split(".", 1)[1]
                kwargs = {"k1": cur.k1, "k2": cur.k2, "k3": cur.k3,
                          "rho_min": cur.rho_min, "rho_max": cur.rho_max,
                          "nu": cur.nu, "eps_sing": cur.eps_sing,
                          "t_end_guard": cur.t_end_guard}
                kwargs[field_name] = np.asarray(value, dtype=float) \
                    if field_name in ("k2", "k3") else float(value)
                new_tube = TubeConfig(**kwargs)
                if new_tube.k1 * sc.task.t_c <= 1.0:
                    return False, f"k1*t_c must exceed 1 (got {new_tube.k1 * sc.task.t_c})"
                if new_tube.rho_max > min(sc.task.start.radius, sc.task.target.radius):
                    return False, "rho_max may not exceed min(d_S, d_T)"
                if self.field.sensing_radius < new_tube.rho_max:
                    return False, "rho_max may not exceed the sensing radius"
                self.tube_cfg = new_tube
                self.stepper = TubeStepper(sc.task, self.field, new_tube, sc.dt)
                self.rho_lb = rho_lower_bound(new_tube)
        except (TypeError, ValueError) as exc:
            return False, str(exc)
        self.command_log.append((self.i, {"kind": "set_param", "path": path,
                                          "value": value}))
        return True, "ok"

    # -- stepping --

    def _make_plant_step(self):
        """Compiled RK4 for the builtin models when numba is present; the
        generic stepper otherwise. Same arithmetic either way."""
        model = self.plant
        if _fast.HAVE_NUMBA and model.name == "omni2d":
            def f(x, u, t, dt, w):
                out = np.empty_like(x)
                _fast.omni2d_step(x, u, w, dt, out)
                return out
            return f
        if _fast.HAVE_NUMBA and model.name == "quad3d":
            drag = float(model.params["drag"])

            def f(x, u, t, dt, w):
                out = np.empty_like(x)
                _fast.quad3d_step(x, u, w, dt, drag, out)
                return out
            return f
        return lambda x, u, t, dt, w: step_plant(model, x, u, t, dt, w)

    def tick(self) -> bool:
        """Advance one dt. Returns False once the episode is finished."""
        if self.done:
            return False
        i = self.i
        sc = self.scenario
        t = i * sc.dt

        t0 = time.perf_counter_ns()
        out = self.stepper.step(t, self.sigma)
        sigma, rho = out.sigma, out.rho
        u, e1, rs, gammas, _es, clamp1, clampk = self.ctrl.compute(self.x, sigma, rho, t + sc.dt)
        t1 = time.perf_counter_ns()

        w = self._zero_w
        if self.disturbance_bound > 0.0 and self._w_unit is not None:
            w = self.disturbance_bound * self._w_unit[i]
        x_new = self._plant_step(self.x, u, t, sc.dt, w)

        j = i + 1
        self.u_buf[i] = u
        self.e1_buf[i] = e1
        self.compute_buf[i] = t1 - t0
        self.substep_buf[i] = out.substeps
        if self.r_buf is not None:
            for k, (rk, gk) in enumerate(zip(rs, gammas)):
                self.r_buf[i, k] = rk
                self.gamma_buf[i, k] = gk
        self._fill_state_row(j, sigma, rho, x_new, out.d, out.min_sensed_gap,
                             out.centers, out.radii)

        tube_events = out.events
        for kind, detail in tube_events:
            self.events.append((i, kind, detail))
        if clamp1:
            self._clamp_seen[TUBE_EXIT] = True
            self.events.append((i, "tube_exit", float(e1)))
        if clampk:
            self._clamp_seen[FUNNEL_EXIT] = True
            self.events.append((i, "funnel_exit", 0))

        self.sigma, self.rho, self.x = sigma, rho, x_new
        self.i = j

        margin = any(kind == "margin_breach" for kind, _ in tube_events)
        blowup = any(kind == "integration_blowup" for kind, _ in tube_events)
        y_gap = self.y_min_gap_buf[j]
        finite = np.isfinite(sigma).all() and math.isfinite(rho) and np.isfinite(x_new).all()
        if not finite or blowup:
            self.events.append((i, "numeric_abort", 0))
            self._status_override = NUMERIC_ABORT
            self.done = True
        elif y_gap <= 0.0:
            self.events.append((i, "collision", 0))
            self._status_override = COLLISION
            self.done = True
        elif margin:
            self._status_override = MARGIN_BREACH
            self.done = True
        elif j >= self.n_ticks:
            self.done = True

        if i % ASSUMPTION2_SAMPLE_EVERY == 0:
            lam = self.plant.min_sym_eig(self.x)
            if not lam > 0.0:
                self.events.append((i, "assumption2_violation", float(lam)))
                self._status_override = NUMERIC_ABORT
                self.done = True

        if not self._workspace_exit_logged:
            y = x_new[0]
            task = sc.task
            if np.any(y < task.workspace_min) or np.any(y > task.workspace_max) \
                    or np.any(sigma < task.workspace_min) or np.any(sigma > task.workspace_max):
                self._workspace_exit_logged = True
                self.events.append((i, "workspace_exit", 0))
                log.info("workspace box exited at t=%.4f (soft bound, not enforced)", t)
        return not self.done

    def _fill_state_row(self, j, sigma, rho, x, d, min_gap,
                        centers=None, radii=None):
        self.sigma_buf[j] = sigma
        self.rho_buf[j] = rho
        self.x_buf[j] = x
        self.d_buf[j] = d
        self.min_gap_buf[j] = min_gap
        if self.field.n_o:
            if centers is None:
                centers, radii = self.field.table.eval(float(self.t_buf[j]))
            diff = x[0] - centers
            self.y_min_gap_buf[j] = float(
                (np.sqrt(np.einsum("ij,ij->i", diff, diff)) - radii).min())
            if self.record_obstacles:
                self.obs_c_buf[j] = centers
                self.obs_r_buf[j] = radii
        else:
            self.y_min_gap_buf[j] = math.inf

    def finish(self) -> EpisodeLog:
        rows = self.i + 1
        status = self._status_override
        if status is None:
            if self._clamp_seen[TUBE_EXIT]:
                status = TUBE_EXIT
            elif self._clamp_seen[FUNNEL_EXIT]:
                status = FUNNEL_EXIT
            elif self.scenario.task.target.contains(self.x[0]):
                status = SUCCESS
            else:
                status = TARGET_MISS
        return EpisodeLog(
            scenario=self.scenario, status=status, tube_cfg=self.tube_cfg,
            t=self.t_buf[:rows], sigma=self.sigma_buf[:rows], rho=self.rho_buf[:rows],
            x=self.x_buf[:rows], d=self.d_buf[:rows], min_gap=self.min_gap_buf[:rows],
            y_min_gap=self.y_min_gap_buf[:rows], u=self.u_buf[:rows], e1=self.e1_buf[:rows],
            r=self.r_buf[:rows] if self.r_buf is not None else None,
            gamma=self.gamma_buf[:rows] if self.gamma_buf is not None else None,
            compute_ns=self.compute_buf[:rows], substeps=self.substep_buf[:rows],
            events=self.events, command_log=self.command_log,
            obstacle_centers=self.obs_c_buf[:rows] if self.obs_c_buf is not None else None,
            obstacle_radii=self.obs_r_buf[:rows] if self.obs_r_buf is not None else None,
            validation_notes=list(self.validation.notes))

    def run(self) -> EpisodeLog:
        while self.tick():
            pass
        return self.finish()


def _tube_state(runner: EpisodeRunner) -> TubeState:
    return TubeState(runner.i * runner.scenario.dt, runner.sigma, runner.rho)


def run_episode(scenario: Scenario, overrides: Optional[dict] = None,
                force: bool = False, record_obstacles: bool = False,
                commands: Optional[list] = None) -> EpisodeLog:
    """Batch entry point. `commands` is an optional schedule
    [(tick, command-dict), ...] applied at tick boundaries, which makes a
    recorded live session replayable headlessly."""
    if overrides:
        scenario = scenario.with_updates(overrides)
    runner = EpisodeRunner(scenario, force=force,
                           record_obstacles=record_obstacles or bool(commands))
    schedule = sorted(commands or [], key=lambda item: item[0])
    k = 0
    while True:
        while k < len(schedule) and schedule[k][0] <= runner.i:
            runner.apply_command(schedule[k][1])
            k += 1
        if not runner.tick():
            break
    return runner.finish()


# -- audits ------------------------------------------------------------------

@dataclass
class AuditReport:
    checks: list  # (name, ok, worst, description)

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _, _ in self.checks)

    def __str__(self):
        return "\n".join(f"[{'PASS' if ok else 'FAIL'}] {name}: {desc} (worst={worst:.3e})"
                         for name, ok, worst, desc in self.checks)


def audit_episode(log_: EpisodeLog, containment_tol: float = 1e-6) -> AuditReport:
    """Run-time verification of the guarantees on a logged episode:
    containment of the output in the tube, tube/unsafe-set disjointness,
    radius bounds, funnel containment, and per-step increment boundedness."""
    tube_cfg = log_.tube_cfg
    checks = []

    dev = np.linalg.norm(log_.y - log_.sigma, axis=1) - log_.rho
    worst = float(dev.max()) if len(dev) else 0.0
    checks.append(("containment", worst <= containment_tol, worst,
                   "||y - sigma|| - rho <= tol at every row"))

    gap_margin = log_.min_gap - log_.rho
    worst = -float(gap_margin.min()) if len(gap_margin) else 0.0
    checks.append(("disjointness", worst <= 0.0, worst,
                   "rho <= min sensed gap at every row"))

    lb = rho_lower_bound(tube_cfg)
    low = float((log_.rho - lb).min())
    high = float((tube_cfg.rho_max - log_.rho).min())
    margin_ok = not any(kind == "margin_breach" for _, kind, _ in log_.events)
    rad_ok = (low >= -1e-9 or not margin_ok) and high >= -1e-9
    checks.append(("radius_bounds", rad_ok, min(low, high),
                   f"rho within [{lb:.6f}, {tube_cfg.rho_max}]"))

    if log_.r is not None and log_.rows > 1:
        err = np.abs(log_.x[:-1, 1:, :] - log_.r[:-1]) - log_.gamma[:-1]
        worst = float(err.max())
        checks.append(("funnel", worst < 0.0, worst,
                       "|x_k - r_k| < gamma_k at every tick, stages 2..N"))

    clamp_events = [e for e in log_.events if e[1] in ("tube_exit", "funnel_exit")]
    checks.append(("no_clamps", not clamp_events, float(len(clamp_events)),
                   "no barrier clamp events"))

    if log_.rows > 1:
        dt = log_.dt
        dsig = np.linalg.norm(np.diff(log_.sigma, axis=0), axis=1) / dt
        drho = np.abs(np.diff(log_.rho)) / dt
        c_sig, c_rho = _increment_bounds(log_)
        worst = float(dsig.max() / c_sig) if c_sig else 0.0
        worst = max(worst, float(drho.max() / c_rho) if c_rho else 0.0)
        checks.append(("bounded_increments", worst <= 1.0, worst,
                       "per-step center/radius rates within config-derived bound"))
    return AuditReport(checks)


def _increment_bounds(log_: EpisodeLog):
    """Config-derived rate bounds for the continuity audit, evaluated at the
    episode's worst logged obstacle margin."""
    sc = log_.scenario
    cfg = log_.tube_cfg
    task = sc.task
    guard = cfg.resolved_guard(task.t_c, sc.dt)
    diam = float(np.linalg.norm(task.workspace_max - task.workspace_min)) \
        + task.start.radius + task.target.radius
    attr = cfg.k1 * task.t_c / guard * diam
    rep = 0.0
    min_gap = float(log_.min_gap.min())
    if math.isfinite(min_gap):
        g = max(min_gap, cfg.eps_sing)
        theta = max(1.0 / g - 1.0 / cfg.rho_max, 0.0)
        den = max(min_gap - cfg.rho_min, cfg.eps_sing)
        r_max = min_gap + _max_obstacle_radius(sc) + diam  # loose center distance
        k2 = float(cfg.k2.max())
        k3 = float(cfg.k3.max())
        n_active = max(1, len(sc.obstacles))
        rep = n_active * theta * (k2 * r_max / den ** 3 + k3)
    c_sig = 2.0 * (attr + rep)
    v_obs = _max_obstacle_speed(sc)
    c_rho = 2.0 * (c_sig + v_obs + 1.0)
    return c_sig, c_rho


def _max_obstacle_radius(sc: Scenario) -> float:
    return max((o.radius.max_radius for o in sc.obstacles), default=0.0)


def _max_obstacle_speed(sc: Scenario) -> float:
    worst = 0.0
    for o in sc.obstacles:
        p = o.motion.params
        if o.motion.kind in ("linear", "bounce"):
            worst = max(worst, float(np.linalg.norm(np.asarray(p["velocity"], dtype=float))))
        elif o.motion.kind == "sinusoid":
            worst = max(worst, abs(float(p["amplitude"]) * float(p["omega"])))
        elif o.motion.kind == "waypoints":
            times = np.asarray(p["times"], dtype=float)
            pts = np.asarray(p["points"], dtype=float)
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            dtm = np.maximum(np.diff(times), 1e-12)
            if len(seg):
                worst = max(worst, float((seg / dtm).max()))
        elif o.motion.kind == "live":
            worst = max(worst, 2.0)  # session drag rate limit default
    return worst
