import copy

import numpy as np
import pytest

from sttnav.scenario import parse_scenario

BASE_2D = {
    "dims": 2,
    "start": {"center": [1.0, 1.0], "radius": 1.0},
    "target": {"center": [8.0, 8.0], "radius": 1.0},
    "t_c": 18.0,
    "workspace": {"min": [0.0, 0.0], "max": [12.0, 12.0]},
    "obstacles": [],
    "tube": {"rho_min": 0.1, "rho_max": 0.9, "nu": 8.0, "k1": 0.5, "k2": 2.0, "k3": 2.0},
    "controller": {"kappa": [30.0]},
    "plant": {"model": "omni2d"},
    "disturbance": {"bound": 0.0},
    "dt": 1e-3,
    "seed": 3,
}

TABLE1_MOBILE = {"rho_min": 0.1, "rho_max": 0.9, "nu": 8.0,
                 "k1": 600.0, "k2": 600.0, "k3": 600.0}
TABLE1_QUAD = {"rho_min": 0.1, "rho_max": 0.9, "nu": 8.0,
               "k1": 300.0, "k2": 1000.0, "k3": 300.0}


def scenario_2d(**updates):
    """BASE_2D with deep-merged updates; obstacles/controller replaced whole.
    When a short t_c is requested and k1 is left at the default, k1 is bumped
    so k1*t_c > 1 still holds."""
    raw = copy.deepcopy(BASE_2D)
    _merge(raw, updates)
    if raw["tube"]["k1"] == BASE_2D["tube"]["k1"] and \
            raw["tube"]["k1"] * raw["t_c"] <= 1.0:
        raw["tube"]["k1"] = 2.5 / raw["t_c"]
    return parse_scenario(raw)


def _merge(base, updates):
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
