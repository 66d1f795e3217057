"""Per-episode metrics: clearance, path length, smoothness, timing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import SUCCESS, EpisodeLog

RESAMPLE_SPACING = 0.05  # m of arc length between smoothness samples


@dataclass(frozen=True)
class Metrics:
    success: bool
    status: str
    min_clearance: float
    path_length: float
    smoothness: float
    compute_time_mean_ms: float
    compute_time_sd_ms: float
    total_stt_time_s: float

    def as_dict(self) -> dict:
        return {
            "success": self.success,
            "status": self.status,
            "min_clearance": self.min_clearance,
            "path_length": self.path_length,
            "smoothness": self.smoothness,
            "compute_time_mean_ms": self.compute_time_mean_ms,
            "compute_time_sd_ms": self.compute_time_sd_ms,
            "total_stt_time_s": self.total_stt_time_s,
        }


def resample_by_arclength(y: np.ndarray, spacing: float = RESAMPLE_SPACING) -> np.ndarray:
    """Points at uniform arc-length spacing along the polyline y."""
    seg = np.linalg.norm(np.diff(y, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    if total < spacing:
        return y[[0, -1]] if len(y) > 1 else y
    grid = np.arange(0.0, total, spacing)
    if total - grid[-1] > 1e-12:
        grid = np.concatenate([grid, [total]])
    out = np.empty((len(grid), y.shape[1]))
    for k in range(y.shape[1]):
        out[:, k] = np.interp(grid, s, y[:, k])
    return out


def discrete_curvature(points: np.ndarray) -> np.ndarray:
    """Turn angle at each interior vertex scaled by the mean adjacent
    segment length: kappa_i = 2 * angle(d_i, d_{i+1}) / (|d_i| + |d_{i+1}|)."""
    d = np.diff(points, axis=0)
    a, b = d[:-1], d[1:]
    dot = np.einsum("ij,ij->i", a, b)
    if points.shape[1] == 2:
        crossn = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    else:
        crossn = np.linalg.norm(np.cross(a, b), axis=1)
    ang = np.arctan2(crossn, dot)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na + nb
    ok = denom > 0.0
    out = np.zeros(len(ang))
    out[ok] = 2.0 * ang[ok] / denom[ok]
    return out


def path_smoothness(y: np.ndarray, spacing: float = RESAMPLE_SPACING) -> float:
    """Mean discrete curvature on the arc-length-resampled trajectory;
    zero for paths too short to resample."""
    if len(y) < 3:
        return 0.0
    pts = resample_by_arclength(y, spacing)
    if len(pts) < 3:
        return 0.0
    return float(discrete_curvature(pts).mean())


def compute_metrics(log: EpisodeLog) -> Metrics:
    if log.rows == 0:
        raise ValueError("empty episode log")
    y = log.y
    path_length = float(np.linalg.norm(np.diff(y, axis=0), axis=1).sum()) if len(y) > 1 else 0.0
    ticks = log.compute_ns[:-1] if log.rows > 1 else log.compute_ns[:0]
    mean_ms = float(ticks.mean() / 1e6) if len(ticks) else 0.0
    sd_ms = float(ticks.std() / 1e6) if len(ticks) else 0.0
    return Metrics(
        success=log.status == SUCCESS,
        status=log.status,
        min_clearance=float(log.y_min_gap.min()) if len(log.y_min_gap) else math.inf,
        path_length=path_length,
        smoothness=path_smoothness(y),
        compute_time_mean_ms=mean_ms,
        compute_time_sd_ms=sd_ms,
        total_stt_time_s=float(ticks.sum() / 1e9),
    )
