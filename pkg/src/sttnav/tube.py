"""Spatiotemporal tube synthesis: center dynamics, smooth-min radius, stepping.

The tube is a time-varying ball B(sigma(t), rho(t)). The center is attracted
to the target with a prescribed-time factor and repelled from nearby
obstacles; the radius follows a closed-form function of the smooth-min
obstacle distance, shrinking toward rho_min near obstacles and relaxing to
rho_max in free space.

Numerical notes, both verified against blow-up cases:
  * the attraction factor t_c/(t_c-t) is clamped t_end_guard before t_c so
    its local rate never exceeds 2.5/dt (RK4 stability bound is ~2.785);
  * a step subdivides into smaller RK4 stages whenever the locally estimated
    stiffness of the active repulsion terms exceeds 1.5/h. Substeps are a
    deterministic function of the state, so runs remain reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from . import _fast
from .env import ObstacleField, Observation, TRasTask, observe

log = logging.getLogger("sttnav.tube")

# Substep rate budget: lambda*h <= SUBSTEP_BUDGET keeps RK4 well inside its
# real-axis stability interval (2.785) with headroom for within-step growth.
SUBSTEP_BUDGET = 1.5
GUARD_RATE_BUDGET = 2.5
MAX_SUBSTEPS = 20000


@dataclass(frozen=True)
class TubeConfig:
    k1: float
    k2: np.ndarray
    k3: np.ndarray
    rho_min: float
    rho_max: float
    nu: float
    eps_sing: float = 1e-6
    t_end_guard: Optional[float] = None  # None: max(dt, k1*t_c*dt/2.5)

    def __post_init__(self):
        object.__setattr__(self, "k2", np.atleast_1d(np.asarray(self.k2, dtype=float)))
        object.__setattr__(self, "k3", np.atleast_1d(np.asarray(self.k3, dtype=float)))
        if not 0.0 < self.rho_min < self.rho_max:
            raise ValueError("need 0 < rho_min < rho_max")
        if not self.nu > 0.0:
            raise ValueError("nu must be positive")
        if not self.k1 > 0.0 or np.any(self.k2 <= 0.0) or np.any(self.k3 <= 0.0):
            raise ValueError("gains must be positive")
        if not self.eps_sing > 0.0:
            raise ValueError("eps_sing must be positive")

    def gain_per_obstacle(self, name: str, n_o: int) -> np.ndarray:
        arr = getattr(self, name)
        if len(arr) == n_o:
            return arr
        if len(arr) == 1:
            return np.full(n_o, arr[0])
        raise ValueError(f"{name} must be scalar or length {n_o}")

    def resolved_guard(self, t_c: float, dt: float) -> float:
        if self.t_end_guard is not None:
            return max(self.t_end_guard, dt)
        return max(dt, self.k1 * t_c * dt / GUARD_RATE_BUDGET)


@dataclass(frozen=True)
class TubeState:
    t: float
    sigma: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))


@dataclass(frozen=True)
class AvoidanceTerm:
    """Per-obstacle repulsion data: weight theta, normal m, tangent v (unit)."""

    theta: float
    m: np.ndarray
    v: np.ndarray


def smooth_min_distance(gaps, nu: float) -> float:
    """Soft minimum -1/nu * ln(sum exp(-nu*gap)). Empty input -> +inf
    (no obstacle in range; treated as arbitrarily far downstream)."""
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        return math.inf
    m = float(gaps.min())
    return m - math.log(float(np.exp(-nu * (gaps - m)).sum())) / nu


def switching_weight(gap: float, rho_max: float, eps_sing: float = 1e-6) -> float:
    """Proximity gate: 1/gap - 1/rho_max inside rho_max, else 0; continuous
    at the boundary. Gaps at or below eps_sing are clamped (near-singular)."""
    if gap > rho_max:
        return 0.0
    if gap < eps_sing:
        log.debug("switching weight near-singular: gap=%.3e clamped", gap)
        gap = eps_sing
    return 1.0 / gap - 1.0 / rho_max


def avoidance_normal(sigma, o_j, rho_o_j: float, rho_min: float,
                     eps_sing: float = 1e-6) -> np.ndarray:
    """Repulsion direction (sigma-o)/(dist-(rho_o+rho_min))^3; the cubed
    denominator is a hard wall at the rho_min margin."""
    diff = np.asarray(sigma, dtype=float) - np.asarray(o_j, dtype=float)
    den = float(np.linalg.norm(diff)) - (rho_o_j + rho_min)
    if den < eps_sing:
        log.debug("avoidance normal near-singular: margin=%.3e clamped", den)
        den = eps_sing
    return diff / den ** 3


def tangential_direction(m_j, goal_vec) -> np.ndarray:
    """Unit vector orthogonal to m_j, picked to point along the goal
    direction. Parallel/degenerate goals fall back to a fixed rule so runs
    stay reproducible: 2D left perpendicular; 3D m_hat x e with e the basis
    vector least aligned with m_hat."""
    m = np.asarray(m_j, dtype=float)
    goal = np.asarray(goal_vec, dtype=float)
    nm = float(np.linalg.norm(m))
    if nm <= 0.0:
        raise ValueError("m_j must be nonzero")
    mh = m / nm
    if m.shape == (2,):
        v = np.array([-mh[1], mh[0]])
        dot = float(v @ goal)
        if dot < 0.0:
            return -v
        return v
    proj = goal - float(goal @ mh) * mh
    npj = float(np.linalg.norm(proj))
    if npj < 1e-9:
        e = np.zeros(3)
        e[int(np.argmin(np.abs(mh)))] = 1.0
        v = np.cross(mh, e)
        return v / float(np.linalg.norm(v))
    return proj / npj


def avoidance_term(sigma, o_j, rho_o_j, goal_vec, cfg: TubeConfig) -> AvoidanceTerm:
    gap = float(np.linalg.norm(np.asarray(sigma, float) - np.asarray(o_j, float))) - rho_o_j
    theta = switching_weight(gap, cfg.rho_max, cfg.eps_sing)
    m = avoidance_normal(sigma, o_j, rho_o_j, cfg.rho_min, cfg.eps_sing)
    return AvoidanceTerm(theta, m, tangential_direction(m, goal_vec))


def radius_from_distance(d: float, cfg: TubeConfig) -> float:
    """Closed-form radius -1/nu * ln(exp(-nu*rho_max) + exp(-nu*d)).
    Strictly increasing in d, saturating at rho_max."""
    if math.isinf(d):
        return cfg.rho_max
    nu = cfg.nu
    m = min(cfg.rho_max, d)
    return m - math.log(math.exp(-nu * (cfg.rho_max - m)) + math.exp(-nu * (d - m))) / nu


def radius_slope(d: float, cfg: TubeConfig) -> float:
    """d rho / d d of the closed form (also the factor multiplying d-dot in
    the radius rate equation)."""
    if math.isinf(d):
        return 0.0
    return 1.0 / (1.0 + math.exp(-cfg.nu * (cfg.rho_max - d)))


def rho_lower_bound(cfg: TubeConfig) -> float:
    """Smallest radius reachable while the center keeps its rho_min margin."""
    return radius_from_distance(cfg.rho_min, cfg)


def contains(state: TubeState, y) -> bool:
    return float(np.linalg.norm(np.asarray(y, dtype=float) - state.sigma)) <= state.rho


def center_derivative(state: TubeState, task: TRasTask, obs: Observation,
                      cfg: TubeConfig, guard: float,
                      k2=None, k3=None) -> np.ndarray:
    """Center rate: prescribed-time attraction to the target plus gated
    repulsion from every active (gap <= rho_max) observed obstacle."""
    t = min(state.t, task.t_c - guard)
    sigma = state.sigma
    goal = task.target.center - sigma
    out = (cfg.k1 * task.t_c / (task.t_c - t)) * goal
    if len(obs):
        k2 = cfg.gain_per_obstacle("k2", len(obs)) if k2 is None else k2
        k3 = cfg.gain_per_obstacle("k3", len(obs)) if k3 is None else k3
        for i in range(len(obs)):
            gap = float(obs.gaps[i])
            if gap > cfg.rho_max:
                continue
            term = avoidance_term(sigma, obs.centers[i], float(obs.radii[i]), goal, cfg)
            out = out + (k2[i] * term.m + k3[i] * term.v) * term.theta
    return out


class StepOut(NamedTuple):
    """Result of one tube tick. The centers/radii/gaps arrays cover every
    obstacle at the new time and stay valid until the next step call."""

    sigma: np.ndarray
    rho: float
    d: float
    min_sensed_gap: float
    min_gap: float
    centers: np.ndarray
    radii: np.ndarray
    gaps: np.ndarray
    events: list
    substeps: int


class TubeStepper:
    """Per-episode tube integrator with precompiled gains and buffers.

    step() advances one fixed tick dt: the center by RK4 (internally
    subdivided when stiffness requires; obstacle positions evaluated at
    every stage time), the radius directly from the closed form at the new
    center and time. Runs on a compiled kernel when numba is available,
    otherwise on the numpy path below; both produce the same dynamics.
    """

    def __init__(self, task: TRasTask, field: ObstacleField, cfg: TubeConfig, dt: float):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.task = task
        self.field = field
        self.cfg = cfg
        self.dt = dt
        self.eta = np.ascontiguousarray(task.target.center)
        self.t_c = task.t_c
        self.k1 = cfg.k1
        self.k2 = np.ascontiguousarray(cfg.gain_per_obstacle("k2", field.n_o))
        self.k3 = np.ascontiguousarray(cfg.gain_per_obstacle("k3", field.n_o))
        self.guard = cfg.resolved_guard(task.t_c, dt)
        self.t_guard_start = task.t_c - self.guard
        self.inv_rmax = 1.0 / cfg.rho_max
        self.rho_lb = rho_lower_bound(cfg)
        self._is3d = task.dims == 3
        self.near_singular = 0
        n_o, n = field.n_o, task.dims
        self._diff = np.empty((n_o, n))
        self._dist = np.empty(n_o)
        self._gaps = np.empty(n_o)
        self._goal = np.empty(n)
        # one-tick displacement beyond this is an integrator blow-up, not motion
        self.max_disp = 4.0 * float(np.linalg.norm(task.workspace_max - task.workspace_min)) \
            + 10.0 * cfg.rho_max
        self._fast = _fast.HAVE_NUMBA
        if self._fast:
            table = field.table
            self._packed = _fast.pack_motions(
                [o.motion for o in field.obstacles],
                [o.radius for o in field.obstacles],
                n, task.workspace_min, task.workspace_max)
            self._ovr_mask = table._ovr_mask
            self._ovr_pos = table._ovr_pos
            self._out_sigma = np.empty(n)
            self._out_centers = np.empty((n_o, n))
            self._out_radii = np.empty(n_o)
            self._out_gaps = np.empty(n_o)

    # -- internals --

    def _deriv(self, t: float, sigma: np.ndarray, want_rate: bool):
        """Center rate at (t, sigma); optionally also a bound on the local
        Jacobian rate used for substep control. The returned array is a
        fresh allocation (RK4 keeps several alive at once)."""
        cfg = self.cfg
        tt = t if t <= self.t_guard_start else self.t_guard_start
        attr_rate = self.k1 * self.t_c / (self.t_c - tt)
        goal = np.subtract(self.eta, sigma, out=self._goal)
        out = np.multiply(goal, attr_rate, out=np.empty_like(sigma))
        rate = attr_rate if want_rate else 0.0
        if not self.field.n_o:
            return out, rate

        centers, radii = self.field.table.eval(t)
        diff = np.subtract(sigma, centers, out=self._diff)
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff, out=self._dist), out=self._dist)
        gaps = np.subtract(dist, radii, out=self._gaps)
        if gaps.min() > cfg.rho_max:
            return out, rate
        idx = np.nonzero(gaps <= cfg.rho_max)[0]
        g = gaps[idx]
        low = g < cfg.eps_sing
        if low.any():
            self.near_singular += int(low.sum())
            g = np.maximum(g, cfg.eps_sing)
        theta = 1.0 / g - self.inv_rmax
        den = dist[idx] - radii[idx] - cfg.rho_min
        low = den < cfg.eps_sing
        if low.any():
            self.near_singular += int(low.sum())
            den = np.maximum(den, cfg.eps_sing)
        den3 = den * den * den
        m = diff[idx] / den3[:, None]
        v = self._tangents(m, goal)
        k2, k3 = self.k2[idx], self.k3[idx]
        out += (k2 * theta) @ m
        out += (k3 * theta) @ v
        if want_rate:
            invg2 = 1.0 / (g * g)
            rate += float((k2 * (dist[idx] / den3 * invg2
                                 + theta * (1.0 / den3 + 3.0 * dist[idx] / (den3 * den)))
                           + k3 * (invg2 + 3.0 * theta / den)).sum())
        return out, rate

    def _tangents(self, m: np.ndarray, goal: np.ndarray) -> np.ndarray:
        norms = np.sqrt(np.einsum("ij,ij->i", m, m))
        mh = m / norms[:, None]
        if not self._is3d:
            v = np.empty_like(mh)
            v[:, 0] = -mh[:, 1]
            v[:, 1] = mh[:, 0]
            flip = v @ goal < 0.0
            v[flip] = -v[flip]
            return v
        proj = goal[None, :] - (mh @ goal)[:, None] * mh
        pn = np.sqrt(np.einsum("ij,ij->i", proj, proj))
        bad = pn < 1e-9
        if bad.any():
            for i in np.nonzero(bad)[0]:
                e = np.zeros(3)
                e[int(np.argmin(np.abs(mh[i])))] = 1.0
                c = np.cross(mh[i], e)
                proj[i] = c
                pn[i] = np.linalg.norm(c)
        return proj / pn[:, None]

    # -- stepping --

    def step(self, t: float, sigma: np.ndarray, dt: Optional[float] = None) -> StepOut:
        """Advance (t, sigma) by one tick."""
        dt = self.dt if dt is None else dt
        t_end = t + dt
        cfg = self.cfg
        if self._fast:
            kinds, prm, wp_off, wp_t, wp_p, rad = self._packed
            (rho, d, min_sensed, min_gap, arg_min, nsub, ns, capped,
             entry_breach, blowup) = _fast.step_kernel(
                t, t_end, sigma, self.eta, self.k1, self.t_c, self.t_guard_start,
                cfg.rho_min, cfg.rho_max, cfg.nu, cfg.eps_sing,
                self.field.sensing_radius, SUBSTEP_BUDGET, MAX_SUBSTEPS, self.max_disp,
                kinds, prm, wp_off, wp_t, wp_p, self._ovr_mask, self._ovr_pos, rad,
                self.k2, self.k3,
                self._out_sigma, self._out_centers, self._out_radii, self._out_gaps)
            events = []
            if ns:
                self.near_singular += int(ns)
                events.append(("near_singular", int(ns)))
            if capped:
                events.append(("substep_cap", -1))
            if blowup:
                events.append(("integration_blowup", -1))
            if entry_breach or (arg_min >= 0 and min_gap <= cfg.rho_min):
                events.append(("margin_breach",
                               int(self.field.ids[arg_min]) if arg_min >= 0 else -1))
            return StepOut(self._out_sigma.copy(), float(rho), float(d),
                           float(min_sensed), float(min_gap),
                           self._out_centers, self._out_radii, self._out_gaps,
                           events, int(nsub))

        tl = t
        sg = sigma
        events = []
        nsub = 0
        before = self.near_singular
        entry_breach = False
        if self.field.n_o:
            c0, r0 = self.field.table.eval(t)
            g0 = np.sqrt(np.einsum("ij,ij->i", sigma - c0, sigma - c0)) - r0
            entry_breach = bool(g0.min() <= cfg.rho_min)
        while not entry_breach and tl < t_end - 1e-15 * max(1.0, t_end):
            d0, rate = self._deriv(tl, sg, True)
            rem = t_end - tl
            h = rem
            if rate * h > SUBSTEP_BUDGET:
                h = SUBSTEP_BUDGET / rate
            nsub += 1
            if nsub > MAX_SUBSTEPS:
                events.append(("substep_cap", -1))
                h = rem
            half = 0.5 * h
            d1, _ = self._deriv(tl + half, sg + half * d0, False)
            d2, _ = self._deriv(tl + half, sg + half * d1, False)
            d3, _ = self._deriv(tl + h, sg + h * d2, False)
            sg = sg + (h / 6.0) * (d0 + 2.0 * d1 + 2.0 * d2 + d3)
            tl = t_end if h >= rem else tl + h

        if self.near_singular > before:
            events.append(("near_singular", self.near_singular - before))
        if float(np.linalg.norm(sg - sigma)) > self.max_disp:
            events.append(("integration_blowup", -1))

        centers, radii = self.field.table.eval(t_end)
        if self.field.n_o:
            diff = sg - centers
            gaps = np.sqrt(np.einsum("ij,ij->i", diff, diff)) - radii
            sensed_gaps = gaps[gaps <= self.field.sensing_radius]
            j = int(np.argmin(gaps))
            min_gap = float(gaps[j])
            if entry_breach or min_gap <= cfg.rho_min:
                events.append(("margin_breach", int(self.field.ids[j])))
        else:
            gaps = np.zeros(0)
            sensed_gaps = gaps
            min_gap = math.inf
        min_sensed = float(sensed_gaps.min()) if len(sensed_gaps) else math.inf
        d = smooth_min_distance(sensed_gaps, cfg.nu)
        rho = radius_from_distance(d, cfg)
        return StepOut(np.asarray(sg, dtype=float), rho, d, min_sensed, min_gap,
                       centers, radii, gaps, events, nsub)


def initial_state(task: TRasTask, field: ObstacleField, cfg: TubeConfig) -> TubeState:
    """Tube at t=0: center at the start point, radius from the closed form.
    Raises if an obstacle already violates the center margin."""
    sigma = task.start.center.astype(float)
    obs = observe(field, 0.0, sigma)
    if len(obs) and obs.min_gap <= cfg.rho_min:
        raise ValueError(f"obstacle margin violated at t=0 (min gap {obs.min_gap:.4f} "
                         f"<= rho_min {cfg.rho_min})")
    rho = radius_from_distance(smooth_min_distance(obs.gaps, cfg.nu), cfg)
    return TubeState(0.0, sigma, rho)


def step(state: TubeState, field: ObstacleField, task: TRasTask,
         cfg: TubeConfig, dt: float):
    """One tick of the tube. Returns (new_state, events) where events is a
    list of (kind, detail); a 'margin_breach' entry means an obstacle closed
    to within rho_min of the center (episode-fatal for the caller)."""
    stepper = TubeStepper(task, field, cfg, dt)
    out = stepper.step(state.t, state.sigma, dt)
    return TubeState(state.t + dt, out.sigma, out.rho), out.events
