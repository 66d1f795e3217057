"""T-RAS task definition, obstacle field, observation, and scenario validation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .motion import MotionSpec, MotionTable, RadiusProfile, motion_position

log = logging.getLogger("sttnav.env")

# Sensing reach, as a multiple of the tube's maximum radius. The scenario
# schema carries no sensing key; anything >= rho_max satisfies the field
# invariant and the avoidance terms are zero beyond rho_max anyway.
SENSING_RADIUS_FACTOR = 2.5


@dataclass(frozen=True)
class BallSet:
    """Closed ball: center plus positive radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0.0:
            raise ValueError("ball radius must be positive")

    def contains(self, x) -> bool:
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.center)) <= self.radius


@dataclass(frozen=True)
class TRasTask:
    """Start ball, target ball, deadline, and workspace box."""

    dims: int
    start: BallSet
    target: BallSet
    t_c: float
    workspace_min: np.ndarray
    workspace_max: np.ndarray

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if not self.t_c > 0.0:
            raise ValueError("t_c must be positive")
        object.__setattr__(self, "workspace_min", np.asarray(self.workspace_min, dtype=float))
        object.__setattr__(self, "workspace_max", np.asarray(self.workspace_max, dtype=float))
        for name, v in (("start", self.start), ("target", self.target)):
            if v.center.shape != (self.dims,):
                raise ValueError(f"{name} center must have {self.dims} components")
        if self.workspace_min.shape != (self.dims,) or self.workspace_max.shape != (self.dims,):
            raise ValueError("workspace bounds must match dims")
        if np.any(self.workspace_max <= self.workspace_min):
            raise ValueError("workspace box must have positive extent")


@dataclass(frozen=True)
class Obstacle:
    """One time-varying unsafe ball. Motion evaluation is deterministic in t;
    a live override (set through the session server) pins the center."""

    id: int
    motion: MotionSpec
    radius: RadiusProfile

    def center_at(self, t: float, dims: int, ws_min=None, ws_max=None) -> np.ndarray:
        return motion_position(self.motion, t, dims, ws_min, ws_max)

    def radius_at(self, t: float) -> float:
        return self.radius.value(t)


class ObstacleField:
    """All obstacles plus the sensing cutoff. Owns the compiled motion table."""

    def __init__(self, obstacles, task: TRasTask, sensing_radius: float):
        ids = [o.id for o in obstacles]
        if len(set(ids)) != len(ids):
            raise ValueError("obstacle ids must be unique")
        if not sensing_radius > 0.0:
            raise ValueError("sensing radius must be positive")
        self.obstacles = list(obstacles)
        self.ids = np.array(ids, dtype=np.intp)
        self.sensing_radius = float(sensing_radius)
        self.task = task
        self.table = MotionTable(
            [o.motion for o in self.obstacles],
            [o.radius for o in self.obstacles],
            task.dims, task.workspace_min, task.workspace_max)

    @property
    def n_o(self) -> int:
        return len(self.obstacles)

    def index_of(self, obstacle_id: int) -> int:
        hits = np.nonzero(self.ids == obstacle_id)[0]
        if not len(hits):
            raise KeyError(f"no obstacle with id {obstacle_id}")
        return int(hits[0])

    def gaps(self, t: float, sigma: np.ndarray):
        """Surface gaps ||sigma - o_j(t)|| - rho_o_j(t) for every obstacle."""
        centers, radii = self.table.eval(t)
        diff = sigma - centers
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return centers, radii, dist - radii


@dataclass(frozen=True)
class Observation:
    """Obstacles within sensing range at one (t, sigma) query, with exact gaps."""

    ids: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    gaps: np.ndarray

    def __len__(self):
        return len(self.ids)

    def rows(self):
        return [(self.centers[i].copy(), float(self.radii[i]), float(self.gaps[i]))
                for i in range(len(self.ids))]

    @property
    def min_gap(self) -> float:
        return float(self.gaps.min()) if len(self.gaps) else math.inf


def observe(field: ObstacleField, t: float, sigma) -> Observation:
    """Everything within the sensing radius, with gap values; pure in (field, t, sigma)."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    sigma = np.asarray(sigma, dtype=float)
    centers, radii, gaps = field.gaps(t, sigma)
    mask = gaps <= field.sensing_radius
    return Observation(field.ids[mask], centers[mask].copy(), radii[mask].copy(), gaps[mask])


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str):
        self.violations.append((code, message))

    def note(self, code: str, message: str):
        self.notes.append((code, message))

    def __str__(self):
        if self.ok:
            return "ok"
        return "; ".join(f"[{c}] {m}" for c, m in self.violations)


def validate(task: TRasTask, field: ObstacleField, tube_cfg) -> ValidationReport:
    """Feasibility checks for a scenario. Never raises; all findings are
    collected in the report. ok=True implies the tube can be constructed at t=0."""
    rep = ValidationReport()
    rmax, rmin = tube_cfg.rho_max, tube_cfg.rho_min
    d_s, d_t = task.start.radius, task.target.radius

    if rmax > min(d_s, d_t):
        rep.add("rho_max_too_large",
                f"rho_max={rmax} exceeds min(d_S, d_T)={min(d_s, d_t)}")
    if tube_cfg.k1 * task.t_c <= 1.0:
        rep.add("k1_tc", f"k1*t_c={tube_cfg.k1 * task.t_c} must exceed 1")
    if field.sensing_radius < rmax:
        rep.add("sensing_radius", "sensing radius smaller than rho_max; "
                                  "an active obstacle could be unobserved")
    for k_name in ("k2", "k3"):
        arr = getattr(tube_cfg, k_name)
        if len(arr) not in (1, field.n_o) and field.n_o > 0:
            rep.add("gain_shape", f"{k_name} must be scalar or one value per obstacle")

    for name, ball in (("start", task.start), ("target", task.target)):
        if np.any(ball.center - ball.radius < task.workspace_min) or \
           np.any(ball.center + ball.radius > task.workspace_max):
            rep.add(f"{name}_outside_workspace", f"{name} ball leaves the workspace box")

    # Start ball must be clear of the unsafe set at t=0.
    if field.n_o:
        _, radii0, gaps0 = field.gaps(0.0, task.start.center)
        bad = np.nonzero(gaps0 <= d_s)[0]
        for i in bad:
            rep.add("start_unsafe",
                    f"obstacle {int(field.ids[i])} intersects the start ball at t=0 "
                    f"(gap {gaps0[i]:.4f} <= d_S {d_s})")

    # Separation from the target at t_c; only checkable for scripted motions.
    live = [o.id for o in field.obstacles if not o.motion.scripted
            or field.table.override_position(field.index_of(o.id)) is not None]
    if live:
        rep.note("assumption3_unverifiable",
                 f"obstacles {live} have live/overridden motion; target separation "
                 f"at t_c cannot be checked ahead of time")
    for o in field.obstacles:
        if o.id in live:
            continue
        c = o.center_at(task.t_c, task.dims, task.workspace_min, task.workspace_max)
        clear = float(np.linalg.norm(task.target.center - c)) - o.radius_at(task.t_c)
        if clear <= rmax:
            rep.add("assumption3",
                    f"obstacle {o.id} is within rho_max of the target center at t_c "
                    f"(clearance {clear:.4f} <= {rmax})")

    if rep.ok:
        # Constructing the initial tube state exercises its own invariants
        # (positive radius, center margin to every sensed obstacle).
        from .tube import initial_state  # local import to avoid a cycle
        try:
            initial_state(task, field, tube_cfg)
        except ValueError as exc:  # pragma: no cover - guarded by checks above
            rep.add("tube_init", str(exc))
    return rep
