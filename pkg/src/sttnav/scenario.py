"""Scenario files: strict parsing, bundled scenarios, override merging.

The on-disk schema is fixed; unknown keys anywhere are an error, so typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .controller import ControllerConfig, FunnelParams
from .env import SENSING_RADIUS_FACTOR, BallSet, Obstacle, ObstacleField, TRasTask
from .motion import MotionSpec, RadiusProfile
from .plant import PlantModel, make_plant
from .tube import TubeConfig


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario input."""


def _check_keys(d: dict, required, optional, ctx: str) -> None:
    if not isinstance(d, dict):
        raise ScenarioError(f"{ctx}: expected an object")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{ctx}: unknown fields {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ScenarioError(f"{ctx}: missing fields {sorted(missing)}")


_MOTION_PARAMS = {
    "static": ({"position"}, set()),
    "linear": ({"start", "velocity"}, set()),
    "bounce": ({"start", "velocity"}, {"min", "max"}),
    "sinusoid": ({"center", "axis", "amplitude", "omega"}, {"phase"}),
    "waypoints": ({"times", "points"}, set()),
    "live": ({"position"}, set()),
}


def _parse_motion(d: dict, ctx: str) -> MotionSpec:
    _check_keys(d, {"kind"}, set().union(*(r | o for r, o in _MOTION_PARAMS.values())), ctx)
    kind = d["kind"]
    if kind not in _MOTION_PARAMS:
        raise ScenarioError(f"{ctx}: unknown motion kind {kind!r}")
    req, opt = _MOTION_PARAMS[kind]
    params = {k: v for k, v in d.items() if k != "kind"}
    _check_keys(params, req, opt, f"{ctx}({kind})")
    return MotionSpec(kind, params)


def _parse_radius(entry: dict, ctx: str) -> RadiusProfile:
    has_r = "radius" in entry
    has_p = "radius_profile" in entry
    if has_r == has_p:
        raise ScenarioError(f"{ctx}: exactly one of radius / radius_profile required")
    try:
        if has_r:
            return RadiusProfile(float(entry["radius"]))
        prof = entry["radius_profile"]
        if not isinstance(prof, dict) or "kind" not in prof:
            raise ScenarioError(f"{ctx}: radius_profile needs a kind")
        if prof["kind"] == "constant":
            _check_keys(prof, {"kind", "radius"}, set(), ctx)
            return RadiusProfile(float(prof["radius"]))
        if prof["kind"] == "pulse":
            _check_keys(prof, {"kind", "base", "amplitude", "omega"}, {"phase"}, ctx)
            return RadiusProfile(float(prof["base"]), float(prof["amplitude"]),
                                 float(prof["omega"]), float(prof.get("phase", 0.0)))
        raise ScenarioError(f"{ctx}: unknown radius profile kind {prof['kind']!r}")
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{ctx}: {exc}") from None


def _parse_obstacle(entry: dict, ctx: str) -> Obstacle:
    _check_keys(entry, {"id", "motion"}, {"radius", "radius_profile"}, ctx)
    return Obstacle(int(entry["id"]), _parse_motion(entry["motion"], f"{ctx}.motion"),
                    _parse_radius(entry, ctx))


@dataclass(frozen=True)
class Scenario:
    raw: dict
    task: TRasTask
    obstacles: tuple
    tube: TubeConfig
    controller: ControllerConfig
    plant_name: str
    plant_params: dict
    disturbance_bound: float
    disturbance_seed: Optional[int]
    dt: float
    seed: int

    def build_field(self) -> ObstacleField:
        """Fresh field (and live-override table) for one episode."""
        return ObstacleField(list(self.obstacles), self.task,
                             SENSING_RADIUS_FACTOR * self.tube.rho_max)

    def build_plant(self) -> PlantModel:
        return make_plant(self.plant_name, self.plant_params)

    def with_updates(self, updates: dict) -> "Scenario":
        """Deep-merged copy; used for run-time overrides like the
        disturbance bound or dt."""
        raw = copy.deepcopy(self.raw)
        _merge(raw, updates)
        return parse_scenario(raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def _merge(base: dict, updates: dict) -> None:
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def parse_scenario(raw: dict) -> Scenario:
    _check_keys(raw, {"dims", "start", "target", "t_c", "workspace", "obstacles",
                      "tube", "plant", "dt", "seed"},
                {"controller", "disturbance"}, "scenario")
    dims = int(raw["dims"])
    for key in ("start", "target"):
        _check_keys(raw[key], {"center", "radius"}, set(), key)
    _check_keys(raw["workspace"], {"min", "max"}, set(), "workspace")

    try:
        task = TRasTask(
            dims,
            BallSet(raw["start"]["center"], float(raw["start"]["radius"])),
            BallSet(raw["target"]["center"], float(raw["target"]["radius"])),
            float(raw["t_c"]),
            raw["workspace"]["min"], raw["workspace"]["max"])
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    obstacles = tuple(_parse_obstacle(o, f"obstacles[{i}]")
                      for i, o in enumerate(raw["obstacles"]))

    tube_d = raw["tube"]
    _check_keys(tube_d, {"rho_min", "rho_max", "nu", "k1", "k2", "k3"},
                {"eps_sing", "t_end_guard"}, "tube")
    try:
        tube = TubeConfig(
            float(tube_d["k1"]), np.asarray(tube_d["k2"], dtype=float),
            np.asarray(tube_d["k3"], dtype=float),
            float(tube_d["rho_min"]), float(tube_d["rho_max"]), float(tube_d["nu"]),
            float(tube_d.get("eps_sing", 1e-6)),
            float(tube_d["t_end_guard"]) if "t_end_guard" in tube_d else None)
    except ValueError as exc:
        raise ScenarioError(f"tube: {exc}") from None

    plant_d = raw["plant"]
    _check_keys(plant_d, {"model"}, {"params", "disturbance"}, "plant")
    plant_name = plant_d["model"]
    plant_params = dict(plant_d.get("params", {}))
    try:
        plant = make_plant(plant_name, plant_params)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if plant.n != dims:
        raise ScenarioError(f"plant {plant_name!r} has dimension {plant.n}, scenario dims {dims}")

    ctrl_d = raw.get("controller", {})
    _check_keys(ctrl_d, set(), {"kappa", "funnels", "eps_err"}, "controller")
    kappa = np.asarray(ctrl_d.get("kappa", [1.0] * plant.n_stages), dtype=float)
    if kappa.shape != (plant.n_stages,):
        raise ScenarioError(f"controller.kappa must have {plant.n_stages} entries")
    funnels = None
    if "funnels" in ctrl_d:
        try:
            funnels = tuple(
                tuple(_parse_funnel(fp, f"controller.funnels[{k}][{i}]")
                      for i, fp in enumerate(row))
                for k, row in enumerate(ctrl_d["funnels"]))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    try:
        controller = ControllerConfig(kappa, funnels, float(ctrl_d.get("eps_err", 1e-9)))
    except ValueError as exc:
        raise ScenarioError(f"controller: {exc}") from None

    dist_d = raw.get("disturbance", {"bound": 0.0})
    _check_keys(dist_d, {"bound"}, set(), "disturbance")
    bound = float(dist_d["bound"])
    dist_seed = None
    if "disturbance" in plant_d:
        _check_keys(plant_d["disturbance"], set(), {"bound", "seed"}, "plant.disturbance")
        bound = float(plant_d["disturbance"].get("bound", bound))
        if "seed" in plant_d["disturbance"]:
            dist_seed = int(plant_d["disturbance"]["seed"])
    if bound < 0.0:
        raise ScenarioError("disturbance bound must be nonnegative")

    dt = float(raw["dt"])
    if not dt > 0.0:
        raise ScenarioError("dt must be positive")
    return Scenario(raw, task, obstacles, tube, controller, plant_name, plant_params,
                    bound, dist_seed, dt, int(raw["seed"]))


def _parse_funnel(d: dict, ctx: str) -> FunnelParams:
    _check_keys(d, {"p", "q", "mu"}, set(), ctx)
    return FunnelParams(float(d["p"]), float(d["q"]), float(d["mu"]))


def load_scenario(path_or_name: str) -> Scenario:
    """Load from a path, or by bundled name (with or without .json)."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{path_or_name}: {exc}") from None
        return parse_scenario(raw)
    name = path_or_name.removesuffix(".json")
    if name in bundled_scenarios():
        text = resources.files("sttnav").joinpath(f"scenarios/{name}.json").read_text()
        return parse_scenario(json.loads(text))
    raise ScenarioError(f"no such file or bundled scenario: {path_or_name}")


def bundled_scenarios() -> list:
    out = []
    for entry in resources.files("sttnav").joinpath("scenarios").iterdir():
        if entry.name.endswith(".json") and not entry.name.startswith("bench_"):
            out.append(entry.name[:-5])
    return sorted(out)
