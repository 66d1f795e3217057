"""Real-time spatiotemporal tube navigation.

Synthesizes a time-varying safe ball online from current obstacle
observations and drives unknown-dynamics pure-feedback plants through it
with a closed-form, model-free funnel controller, with runtime audits of
the reach/avoid/containment guarantees.
"""

from .controller import (ControllerConfig, FunnelParams, StageTrace, control,
                         funnel_bound, stage1_reference, stage1_transform,
                         stagek_transform)
from .env import (BallSet, Obstacle, ObstacleField, Observation, TRasTask,
                  ValidationReport, observe, validate)
from .metrics import Metrics, compute_metrics
from .motion import MotionSpec, RadiusProfile
from .plant import DisturbanceSampler, PlantModel, builtin_models, make_plant, step_plant
from .scenario import Scenario, ScenarioError, bundled_scenarios, load_scenario, parse_scenario
from .sim import AuditReport, EpisodeLog, EpisodeRunner, audit_episode, run_episode
from .tube import (TubeConfig, TubeState, avoidance_normal, center_derivative,
                   contains, initial_state, radius_from_distance, rho_lower_bound,
                   smooth_min_distance, step, switching_weight, tangential_direction)

__version__ = "0.1.0"
