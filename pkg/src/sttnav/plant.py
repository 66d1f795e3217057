"""Simulated pure-feedback plants with bounded disturbances.

The cascade is x_k-dot = f_k(x_1..k) + g_k(x_1..k) x_{k+1} + w_k, with the
last stage driven by u. The controller never sees f, g, or w; the firewall
is structural (control() takes no plant object).

Built-in models:
  omni2d  unit-gain holonomic kinematics, y-dot = u + w           (N=1, n=2)
  quad3d  position/velocity cascade with quadratic drag            (N=2, n=3)
  gen_pf  nonlinear two-stage plant with non-identity, skewed g    (N=2, n=2)

The robot/aircraft coefficients are not taken from any source; only the
structural class (locally Lipschitz f, uniformly positive-definite
symmetric part of g) matters for the guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class PlantModel:
    name: str
    n_stages: int
    n: int
    derivative: Callable  # (t, x_stack (N,n), u (n,), w (N,n)) -> (N,n)
    min_sym_eig: Callable  # x_stack -> lambda_min of (g_k+g_k^T)/2 over stages
    params: dict

    def initial_state(self, y0: np.ndarray) -> np.ndarray:
        x = np.zeros((self.n_stages, self.n))
        x[0] = y0
        return x


class DisturbanceSampler:
    """Uniform per-axis noise in [-bound, bound], one draw per tick per
    stage, deterministic under the seed."""

    def __init__(self, bound: float, seed: int):
        if bound < 0.0:
            raise ValueError("disturbance bound must be nonnegative")
        self.bound = float(bound)
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n_stages: int, n: int) -> np.ndarray:
        if self.bound == 0.0:
            return np.zeros((n_stages, n))
        return self._rng.uniform(-self.bound, self.bound, (n_stages, n))

    def draw_block(self, ticks: int, n_stages: int, n: int) -> np.ndarray:
        """All ticks at once; same stream as repeated draw() calls."""
        if self.bound == 0.0:
            return np.zeros((ticks, n_stages, n))
        return self._rng.uniform(-self.bound, self.bound, (ticks, n_stages, n))


def step_plant(model: PlantModel, x_stack: np.ndarray, u: np.ndarray,
               t: float, dt: float, w: Optional[np.ndarray] = None) -> np.ndarray:
    """One RK4 step of the full cascade; u and w held over the tick."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x_stack, dtype=float)
    if w is None:
        w = np.zeros_like(x)
    f = model.derivative
    k1 = f(t, x, u, w)
    k2 = f(t + dt / 2.0, x + (dt / 2.0) * k1, u, w)
    k3 = f(t + dt / 2.0, x + (dt / 2.0) * k2, u, w)
    k4 = f(t + dt, x + dt * k3, u, w)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _omni2d(params: dict) -> PlantModel:
    def deriv(t, x, u, w):
        return (u + w[0]).reshape(1, -1)

    return PlantModel("omni2d", 1, 2, deriv, lambda x: 1.0, params)


def _quad3d(params: dict) -> PlantModel:
    c = float(params.get("drag", 0.1))

    def deriv(t, x, u, w):
        out = np.empty_like(x)
        out[0] = x[1] + w[0]
        v = x[1]
        out[1] = -c * v * np.abs(v) + u + w[1]
        return out

    return PlantModel("quad3d", 2, 3, deriv, lambda x: 1.0, dict(params, drag=c))


def _gen_pf(params: dict) -> PlantModel:
    """Two-stage nonlinear pure-feedback plant with state-dependent, skewed
    input matrices. The symmetric parts are b1*I and b2*I (the sin/skew
    parts are antisymmetric), so Assumption-2 holds by construction with
    floor min(b1, b2)."""
    a = float(params.get("a", 0.3))
    b1 = float(params.get("b1", 2.0))
    b2 = float(params.get("b2", 2.0))
    c = float(params.get("c", 0.5))
    s = float(params.get("skew", 0.3))
    if b1 <= 0.0 or b2 <= 0.0:
        raise ValueError("gen_pf needs positive b1, b2")

    def g1(x1):
        sn = c * math.sin(float(x1[0]))
        return np.array([[b1, sn], [-sn, b1]])

    def g2(_x):
        return np.array([[b2, s], [-s, b2]])

    def deriv(t, x, u, w):
        out = np.empty_like(x)
        out[0] = a * np.tanh(x[0]) + g1(x[0]) @ x[1] + w[0]
        out[1] = -0.2 * x[1] + 0.1 * np.sin(x[0]) + g2(x) @ u + w[1]
        return out

    def min_eig(x):
        m1 = g1(x[0])
        m2 = g2(x)
        return min(float(np.linalg.eigvalsh((m1 + m1.T) / 2.0).min()),
                   float(np.linalg.eigvalsh((m2 + m2.T) / 2.0).min()))

    return PlantModel("gen_pf", 2, 2, deriv, min_eig,
                      dict(a=a, b1=b1, b2=b2, c=c, skew=s))


_BUILTINS = {"omni2d": _omni2d, "quad3d": _quad3d, "gen_pf": _gen_pf}


def builtin_models() -> tuple:
    return tuple(sorted(_BUILTINS))


def make_plant(name: str, params: Optional[dict] = None) -> PlantModel:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown plant model {name!r}; known: {builtin_models()}") from None
    return factory(params or {})
