"""Closed-form N-stage funnel controller.

The law reads only the tube (sigma, rho), the funnel bounds, the gains and
the measured stage states; no plant model enters anywhere. Stage 1 confines
the output to the tube through a logarithmic barrier on the normalized
radial error; stages 2..N confine each state to a shrinking band around the
reference handed down by the previous stage.

Errors are clamped eps_err below the barrier: discrete time can overshoot
the open set the proofs work in, and a clamped-but-finite command plus a
logged TubeExit/FunnelExit event is more useful than an infinity. Clamp
events in nominal runs fail the acceptance audits, so clamping never hides
a violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .tube import TubeState

TUBE_EXIT = "tube_exit"
FUNNEL_EXIT = "funnel_exit"


@dataclass(frozen=True)
class FunnelParams:
    """Time-varying bound gamma(t) = (p - q) e^{-mu t} + q."""

    p: float
    q: float
    mu: float

    def __post_init__(self):
        if not (self.p > self.q > 0.0):
            raise ValueError("need p > q > 0")
        if self.mu < 0.0:
            raise ValueError("mu must be nonnegative")


@dataclass(frozen=True)
class ControllerConfig:
    kappa: np.ndarray                     # one positive gain per stage
    funnels: Optional[tuple] = None       # (N-1) x n FunnelParams; None: default at init
    eps_err: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "kappa", np.atleast_1d(np.asarray(self.kappa, dtype=float)))
        if np.any(self.kappa <= 0.0):
            raise ValueError("stage gains must be positive")
        if not 0.0 < self.eps_err < 1.0:
            raise ValueError("eps_err must lie in (0, 1)")
        if self.funnels is not None:
            funnels = tuple(tuple(row) for row in self.funnels)
            object.__setattr__(self, "funnels", funnels)
            if len(funnels) != self.n_stages - 1:
                raise ValueError(f"need funnels for stages 2..{self.n_stages}")

    @property
    def n_stages(self) -> int:
        return len(self.kappa)


@dataclass
class StageTrace:
    """Intermediate controller quantities for logging and audits."""

    e1: float = 0.0
    eps1: float = 0.0
    r: List[np.ndarray] = field(default_factory=list)       # r_2 .. r_N
    gamma: List[np.ndarray] = field(default_factory=list)   # gamma_2 .. gamma_N
    e: List[np.ndarray] = field(default_factory=list)       # e_2 .. e_N
    events: List[str] = field(default_factory=list)


def funnel_bound(t: float, fp: FunnelParams) -> float:
    """Monotone nonincreasing envelope from p at t=0 toward q."""
    return (fp.p - fp.q) * math.exp(-fp.mu * t) + fp.q


def _log_ratio(e: float) -> float:
    return math.log((1.0 + e) / (1.0 - e))


def stage1_transform(x1, tube: TubeState, eps_err: float = 1e-9):
    """Normalized radial error e1 = |x1 - sigma| / rho and its barrier
    transform. Returns (e1, eps1, clamped); e1 is the clamped value. A
    degenerate tube (rho <= 0, possible only after a margin breach) clamps
    like any other escape so the output stays finite."""
    dist = float(np.linalg.norm(np.asarray(x1, dtype=float) - tube.sigma))
    e1 = dist / tube.rho if tube.rho > 0.0 else math.inf
    clamped = e1 >= 1.0 - eps_err
    if clamped:
        e1 = 1.0 - eps_err
    return e1, _log_ratio(e1), clamped


def stage1_reference(x1, tube: TubeState, kappa1: float, eps_err: float = 1e-9):
    """Velocity-level reference -kappa1 * eps1 * (x1 - sigma); always points
    from the output toward the tube center."""
    x1 = np.asarray(x1, dtype=float)
    e1, eps1, clamped = stage1_transform(x1, tube, eps_err)
    diff = x1 - tube.sigma
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        return np.zeros_like(diff), (e1, eps1, clamped)
    # eps1 is a function of the clamped e1, so the commanded magnitude stays
    # finite; direction is exact.
    return -kappa1 * eps1 * (e1 * tube.rho / dist) * diff, (e1, eps1, clamped)


def stagek_transform(x_k, r_k, gamma_k, eps_err: float = 1e-9):
    """Per-axis band error e = (x - r)/gamma, its barrier transform, and the
    diagonal of xi = 4 diag(gamma)^-1 (I - diag(e o e))^-1.
    Returns (e, eps, xi_diag, clamped_any)."""
    x_k = np.asarray(x_k, dtype=float)
    r_k = np.asarray(r_k, dtype=float)
    gamma_k = np.asarray(gamma_k, dtype=float)
    e = (x_k - r_k) / gamma_k
    lim = 1.0 - eps_err
    clamped = bool(np.any(np.abs(e) >= lim))
    if clamped:
        e = np.clip(e, -lim, lim)
    eps = np.log((1.0 + e) / (1.0 - e))
    xi = 4.0 / (gamma_k * (1.0 - e * e))
    return e, eps, xi, clamped


def resolve_funnels(cfg: ControllerConfig, x_stack0: np.ndarray,
                    tube0: TubeState) -> ControllerConfig:
    """Fill in default funnels when a scenario gives none, sized off the
    initial stage errors: p = 2|x_k(0) - r_k(0)| + 1, q = 0.1, mu = 1.
    Runs the stage recursion once at t=0 to obtain each r_k(0)."""
    n_stages, n = x_stack0.shape
    if cfg.n_stages != n_stages:
        raise ValueError(f"kappa has {cfg.n_stages} stages, plant has {n_stages}")
    if cfg.funnels is not None:
        if any(len(row) != n for row in cfg.funnels):
            raise ValueError(f"funnel rows must have {n} entries")
        return cfg
    if n_stages == 1:
        return ControllerConfig(cfg.kappa, (), cfg.eps_err)
    funnels = []
    r, _ = stage1_reference(x_stack0[0], tube0, float(cfg.kappa[0]), cfg.eps_err)
    for k in range(1, n_stages):
        row = []
        for i in range(n):
            p = 2.0 * abs(float(x_stack0[k, i] - r[i])) + 1.0
            row.append(FunnelParams(p, 0.1, 1.0))
        funnels.append(tuple(row))
        gamma = np.array([funnel_bound(0.0, fp) for fp in row])
        e, eps, xi, _ = stagek_transform(x_stack0[k], r, gamma, cfg.eps_err)
        r = -float(cfg.kappa[k]) * xi * eps
    return ControllerConfig(cfg.kappa, tuple(funnels), cfg.eps_err)


def control(x_stack, tube: TubeState, cfg: ControllerConfig, t: float):
    """Full recursion: r_2 from the tube stage, r_{k+1} = -kappa_k xi_k eps_k,
    u = -kappa_N xi_N eps_N. Returns (u, StageTrace). Output is finite for
    any input (clamps + events instead of infinities)."""
    x_stack = np.atleast_2d(np.asarray(x_stack, dtype=float))
    n_stages = cfg.n_stages
    if n_stages > 1 and cfg.funnels is None:
        raise ValueError("funnels unresolved; call resolve_funnels first")
    trace = StageTrace()

    r, (e1, eps1, clamped) = stage1_reference(
        x_stack[0], tube, float(cfg.kappa[0]), cfg.eps_err)
    trace.e1, trace.eps1 = e1, eps1
    if clamped:
        trace.events.append(TUBE_EXIT)
    for k in range(1, n_stages):
        trace.r.append(r)
        gamma = np.array([funnel_bound(t, fp) for fp in cfg.funnels[k - 1]])
        trace.gamma.append(gamma)
        e, eps, xi, clamped = stagek_transform(x_stack[k], r, gamma, cfg.eps_err)
        trace.e.append(e)
        if clamped:
            trace.events.append(FUNNEL_EXIT)
        r = -float(cfg.kappa[k]) * xi * eps
    return r, trace


class ControlLoop:
    """Precompiled per-episode controller (flattened funnel arrays, no
    per-tick object churn). Semantically identical to control()."""

    def __init__(self, cfg: ControllerConfig, n: int):
        self.cfg = cfg
        self.n_stages = cfg.n_stages
        self.kappa = cfg.kappa
        self.eps_err = cfg.eps_err
        if self.n_stages > 1:
            if cfg.funnels is None:
                raise ValueError("funnels unresolved; call resolve_funnels first")
            self.fp_p = np.array([[fp.p for fp in row] for row in cfg.funnels])
            self.fp_q = np.array([[fp.q for fp in row] for row in cfg.funnels])
            self.fp_mu = np.array([[fp.mu for fp in row] for row in cfg.funnels])
            if self.fp_p.shape != (self.n_stages - 1, n):
                raise ValueError("funnel shape must be (N-1) x n")

    def compute(self, x_stack: np.ndarray, sigma: np.ndarray, rho: float, t: float):
        """Returns (u, e1, r_list, gamma_list, e_list, clamp1, clampk)."""
        lim = 1.0 - self.eps_err
        diff = x_stack[0] - sigma
        dist = math.sqrt(float(diff @ diff))
        e1 = dist / rho if rho > 0.0 else math.inf
        clamp1 = e1 >= lim
        if clamp1:
            e1 = lim
        eps1 = math.log((1.0 + e1) / (1.0 - e1))
        if dist == 0.0:
            r = np.zeros_like(diff)
        else:
            r = (-self.kappa[0] * eps1 * (e1 * rho / dist)) * diff
        rs, gammas, es = [], [], []
        clampk = False
        for k in range(1, self.n_stages):
            rs.append(r)
            gamma = (self.fp_p[k - 1] - self.fp_q[k - 1]) * np.exp(-self.fp_mu[k - 1] * t) \
                + self.fp_q[k - 1]
            gammas.append(gamma)
            e = (x_stack[k] - r) / gamma
            over = np.abs(e) >= lim
            if over.any():
                clampk = True
                e = np.clip(e, -lim, lim)
            es.append(e)
            r = (-4.0 * self.kappa[k]) * np.log((1.0 + e) / (1.0 - e)) / (gamma * (1.0 - e * e))
        return r, e1, rs, gammas, es, clamp1, clampk
