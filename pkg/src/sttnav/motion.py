"""Obstacle motion descriptors and their batch evaluation.

Motions are deterministic functions of time. A MotionTable packs all
obstacles of a field into per-kind arrays so the tube stepper can evaluate
every center/radius at a stage time with a handful of vector ops instead of
a Python loop per obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MOTION_KINDS = ("static", "linear", "bounce", "sinusoid", "waypoints", "live")


@dataclass(frozen=True)
class MotionSpec:
    """One obstacle's scripted center trajectory."""

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")

    @property
    def scripted(self) -> bool:
        """Live motions have no script; their position is command-driven."""
        return self.kind != "live"


@dataclass(frozen=True)
class RadiusProfile:
    """Obstacle radius over time: constant, or a bounded pulsation."""

    base: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.base < 0.0:
            raise ValueError("obstacle radius must be nonnegative")
        if not 0.0 <= self.amplitude <= self.base:
            raise ValueError("radius pulsation amplitude must lie in [0, base]")

    def value(self, t: float) -> float:
        if self.amplitude == 0.0:
            return self.base
        return self.base + self.amplitude * math.sin(self.omega * t + self.phase)

    @property
    def max_radius(self) -> float:
        return self.base + self.amplitude


def _as_vec(x, dims: int, what: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (dims,):
        raise ValueError(f"{what} must be a length-{dims} vector, got shape {v.shape}")
    return v


def motion_position(spec: MotionSpec, t: float, dims: int,
                    workspace_min=None, workspace_max=None) -> np.ndarray:
    """Reference (non-vectorized) evaluation of one motion at time t."""
    p = spec.params
    if spec.kind == "static":
        return _as_vec(p["position"], dims, "static position")
    if spec.kind == "linear":
        return _as_vec(p["start"], dims, "start") + t * _as_vec(p["velocity"], dims, "velocity")
    if spec.kind == "bounce":
        lo = _as_vec(p.get("min", workspace_min), dims, "bounce min")
        hi = _as_vec(p.get("max", workspace_max), dims, "bounce max")
        x0 = _as_vec(p["start"], dims, "start")
        v = _as_vec(p["velocity"], dims, "velocity")
        return _fold(x0 + t * v - lo, hi - lo) + lo
    if spec.kind == "sinusoid":
        c = _as_vec(p["center"], dims, "center").copy()
        axis = int(p["axis"])
        c[axis] += p["amplitude"] * math.sin(p["omega"] * t + p.get("phase", 0.0))
        return c
    if spec.kind == "waypoints":
        times = np.asarray(p["times"], dtype=float)
        pts = np.asarray(p["points"], dtype=float)
        out = np.empty(dims)
        for i in range(dims):
            out[i] = np.interp(t, times, pts[:, i])
        return out
    if spec.kind == "live":
        return _as_vec(p["position"], dims, "live rest position")
    raise AssertionError(spec.kind)


def _fold(x: np.ndarray, period: np.ndarray) -> np.ndarray:
    """Triangle-wave fold of x into [0, period] per axis (wall reflection)."""
    two = 2.0 * period
    u = np.mod(x, two)
    return np.where(u <= period, u, two - u)


class MotionTable:
    """Vectorized center/radius evaluation for a fixed obstacle list.

    Obstacles are grouped by motion kind at build time; evaluating all
    centers at a time t costs one or two vector ops per kind present.
    Live overrides are applied last and pin an obstacle wherever the last
    command put it.
    """

    def __init__(self, specs, radius_profiles, dims, workspace_min, workspace_max):
        self.n_o = len(specs)
        self.dims = dims
        self._centers = np.zeros((self.n_o, dims))
        self._radii = np.zeros(self.n_o)
        self._cache_t = None

        idx_static, idx_lin, idx_bounce, idx_sin, idx_wp = [], [], [], [], []
        for i, spec in enumerate(specs):
            {"static": idx_static, "live": idx_static, "linear": idx_lin,
             "bounce": idx_bounce, "sinusoid": idx_sin,
             "waypoints": idx_wp}[spec.kind].append(i)

        def vec(i, key):
            return _as_vec(specs[i].params[key], dims, key)

        self._static_idx = np.array(idx_static, dtype=np.intp)
        self._static_pos = np.array(
            [motion_position(specs[i], 0.0, dims) for i in idx_static]).reshape(len(idx_static), dims)

        self._lin_idx = np.array(idx_lin, dtype=np.intp)
        self._lin_p0 = np.array([vec(i, "start") for i in idx_lin]).reshape(len(idx_lin), dims)
        self._lin_v = np.array([vec(i, "velocity") for i in idx_lin]).reshape(len(idx_lin), dims)

        self._bnc_idx = np.array(idx_bounce, dtype=np.intp)
        self._bnc_lo = np.array(
            [specs[i].params.get("min", workspace_min) for i in idx_bounce],
            dtype=float).reshape(len(idx_bounce), dims)
        bnc_hi = np.array(
            [specs[i].params.get("max", workspace_max) for i in idx_bounce],
            dtype=float).reshape(len(idx_bounce), dims)
        self._bnc_span = bnc_hi - self._bnc_lo
        self._bnc_p0 = np.array([vec(i, "start") for i in idx_bounce]).reshape(len(idx_bounce), dims) - self._bnc_lo
        self._bnc_v = np.array([vec(i, "velocity") for i in idx_bounce]).reshape(len(idx_bounce), dims)
        if np.any(self._bnc_span <= 0.0) and len(idx_bounce):
            raise ValueError("bounce box must have positive extent")

        self._sin_idx = np.array(idx_sin, dtype=np.intp)
        self._sin_c = np.array([vec(i, "center") for i in idx_sin]).reshape(len(idx_sin), dims)
        self._sin_axis = np.array([int(specs[i].params["axis"]) for i in idx_sin], dtype=np.intp)
        self._sin_amp = np.array([float(specs[i].params["amplitude"]) for i in idx_sin])
        self._sin_om = np.array([float(specs[i].params["omega"]) for i in idx_sin])
        self._sin_ph = np.array([float(specs[i].params.get("phase", 0.0)) for i in idx_sin])

        self._wp_idx = idx_wp
        self._wp = [(np.asarray(specs[i].params["times"], dtype=float),
                     np.asarray(specs[i].params["points"], dtype=float)) for i in idx_wp]

        profs = list(radius_profiles)
        self._rad_base = np.array([rp.base for rp in profs]) if profs else np.zeros(0)
        pulsing = [i for i, rp in enumerate(profs) if rp.amplitude != 0.0]
        self._pul_idx = np.array(pulsing, dtype=np.intp)
        self._pul_amp = np.array([profs[i].amplitude for i in pulsing])
        self._pul_om = np.array([profs[i].omega for i in pulsing])
        self._pul_ph = np.array([profs[i].phase for i in pulsing])

        self._ovr_mask = np.zeros(self.n_o, dtype=bool)
        self._ovr_pos = np.zeros((self.n_o, dims))

    # -- live override mailbox (single writer, read at tick boundaries) --

    def set_override(self, index: int, position: np.ndarray) -> None:
        self._ovr_pos[index] = position
        self._ovr_mask[index] = True
        self._cache_t = None

    def clear_override(self, index: int) -> None:
        self._ovr_mask[index] = False
        self._cache_t = None

    def override_position(self, index: int):
        return self._ovr_pos[index].copy() if self._ovr_mask[index] else None

    @property
    def has_overrides(self) -> bool:
        return bool(self._ovr_mask.any())

    # -- evaluation --

    def eval(self, t: float):
        """Centers (n_o, dims) and radii (n_o,) at time t. Returned arrays
        are internal buffers, valid until the next eval call."""
        if self._cache_t == t:
            return self._centers, self._radii
        c = self._centers
        if len(self._static_idx):
            c[self._static_idx] = self._static_pos
        if len(self._lin_idx):
            c[self._lin_idx] = self._lin_p0 + t * self._lin_v
        if len(self._bnc_idx):
            u = np.mod(self._bnc_p0 + t * self._bnc_v, 2.0 * self._bnc_span)
            np.minimum(u, 2.0 * self._bnc_span - u, out=u)
            c[self._bnc_idx] = u + self._bnc_lo
        if len(self._sin_idx):
            c[self._sin_idx] = self._sin_c
            c[self._sin_idx, self._sin_axis] += self._sin_amp * np.sin(self._sin_om * t + self._sin_ph)
        for i, (times, pts) in zip(self._wp_idx, self._wp):
            for k in range(self.dims):
                c[i, k] = np.interp(t, times, pts[:, k])
        if self._ovr_mask.any():
            c[self._ovr_mask] = self._ovr_pos[self._ovr_mask]
        r = self._radii
        r[:] = self._rad_base
        if len(self._pul_idx):
            r[self._pul_idx] += self._pul_amp * np.sin(self._pul_om * t + self._pul_ph)
        self._cache_t = t
        return c, r
