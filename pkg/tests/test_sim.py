import math

import numpy as np
import pytest

from conftest import scenario_2d
from sttnav.scenario import ScenarioError
from sttnav.sim import (COLLISION, MARGIN_BREACH, NUMERIC_ABORT, SUCCESS,
                        TARGET_MISS, EpisodeRunner, audit_episode, run_episode)

OBSTACLE_ON_PATH = [{"id": 1, "motion": {"kind": "static", "position": [4.5, 4.6]},
                     "radius": 0.3}]
CROSSING = [{"id": 1, "motion": {"kind": "linear", "start": [7.0, 2.0],
                                 "velocity": [-0.25, 0.3]}, "radius": 0.25}]


def test_empty_field_success_and_analytic_center():
    sc = scenario_2d()
    log = run_episode(sc)
    assert log.status == SUCCESS
    eta = sc.task.target.center
    s = sc.task.start.center
    k1, t_c = sc.tube.k1, sc.task.t_c
    worst = 0.0
    for i in range(0, log.rows, 500):
        t = float(log.t[i])
        if t > t_c - sc.dt:
            continue
        frac = math.exp(k1 * t_c * math.log1p(-t / t_c)) if t < t_c else 0.0
        worst = max(worst, float(np.max(np.abs(log.sigma[i] - (eta + (s - eta) * frac)))))
    assert worst <= 1e-3
    assert np.linalg.norm(log.y[-1] - eta) <= sc.tube.rho_max + 1e-9


def test_obstacle_through_path_success_with_clearance():
    sc = scenario_2d(obstacles=CROSSING)
    log = run_episode(sc)
    assert log.status == SUCCESS
    # brute-force clearance scan at every logged step
    o0 = np.array([7.0, 2.0])
    v = np.array([-0.25, 0.3])
    clear = np.linalg.norm(log.y - (o0 + np.outer(log.t, v)), axis=1) - 0.25
    assert clear.min() > 0.0
    assert log.y_min_gap.min() == pytest.approx(clear.min(), abs=1e-12)


def test_zero_dt_rejected_before_loop():
    with pytest.raises(ScenarioError):
        scenario_2d(dt=0.0)


def test_nonintegral_tc_over_dt_rejected():
    sc = scenario_2d(t_c=18.0005)
    with pytest.raises(ScenarioError):
        EpisodeRunner(sc)


def test_row_grid_and_log_shape():
    sc = scenario_2d(t_c=0.5)
    log = run_episode(sc)
    assert log.rows == 501
    assert np.allclose(np.diff(log.t), sc.dt, atol=1e-12)
    assert log.t[-1] == pytest.approx(0.5)
    assert np.isnan(log.u[-1]).all()
    assert not np.isnan(log.u[:-1]).any()
    assert log.x.shape == (501, 1, 2)


def test_invalid_scenario_requires_force():
    sc = scenario_2d(obstacles=[{"id": 1, "motion": {"kind": "static",
                                                     "position": [8.0, 8.0]},
                                 "radius": 0.2}])
    with pytest.raises(ScenarioError):
        run_episode(sc)
    log = run_episode(sc, force=True)
    assert log.status in (SUCCESS, COLLISION, MARGIN_BREACH, TARGET_MISS)


def test_margin_breach_marks_episode_failed():
    sc = scenario_2d(t_c=2.0, obstacles=[{"id": 1, "motion": {"kind": "static",
                                                              "position": [9.0, 9.0]},
                                          "radius": 0.4}])
    runner = EpisodeRunner(sc)
    for _ in range(100):
        runner.tick()
    runner.field.table.set_override(0, runner.sigma + np.array([0.05, 0.0]))
    while runner.tick():
        pass
    log = runner.finish()
    assert log.status == MARGIN_BREACH
    assert log.rows < 2001  # stopped early


def test_determinism_identical_arrays():
    sc = scenario_2d(t_c=2.0, obstacles=CROSSING, disturbance={"bound": 0.1})
    a = run_episode(sc)
    b = run_episode(sc)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.rho, b.rho)
    assert np.array_equal(a.u[:-1], b.u[:-1])
    assert a.events == b.events


def test_disturbance_changes_trajectory_but_not_containment():
    sc = scenario_2d(t_c=4.0, obstacles=CROSSING)
    a = run_episode(sc)
    b = run_episode(sc, overrides={"disturbance": {"bound": 0.1}})
    assert not np.array_equal(a.x, b.x)
    assert audit_episode(b).ok


def test_audits_catch_tampered_log():
    sc = scenario_2d(t_c=1.0)
    log = run_episode(sc)
    assert audit_episode(log).ok
    log.x[500, 0] = log.sigma[500] + np.array([5.0, 0.0])  # teleported output
    rep = audit_episode(log)
    assert not rep.ok
    assert any(name == "containment" and not ok for name, ok, _, _ in rep.checks)


def test_command_schedule_replays_identically():
    sc = scenario_2d(t_c=2.0, obstacles=[{"id": 5, "motion": {"kind": "static",
                                                              "position": [6.0, 3.0]},
                                          "radius": 0.3}])
    commands = [(300, {"kind": "drag", "id": 5, "position": [5.8, 3.2]}),
                (700, {"kind": "set_param", "path": "tube.nu", "value": 10.0}),
                (900, {"kind": "drag", "id": 5, "position": [5.6, 3.4]})]
    a = run_episode(sc, commands=commands)
    assert len(a.command_log) == 3
    b = run_episode(sc, commands=a.command_log)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.rho, b.rho)
    assert a.command_log == b.command_log
    assert a.obstacle_centers is not None
    assert not np.array_equal(a.obstacle_centers[0, 0], a.obstacle_centers[-1, 0])


def test_drag_commands_rate_clamped():
    sc = scenario_2d(t_c=1.0, obstacles=[{"id": 5, "motion": {"kind": "static",
                                                              "position": [6.0, 3.0]},
                                          "radius": 0.3}])
    runner = EpisodeRunner(sc, record_obstacles=True)
    ok, msg = runner.apply_command({"kind": "drag", "id": 5, "position": [9.0, 9.0]})
    assert ok and msg == "clamped"
    pos = runner.field.table.override_position(0)
    assert np.linalg.norm(pos - [6.0, 3.0]) <= 2.0 * sc.dt + 1e-12
    assert any(kind == "drag_rate_clamped" for _, kind, _ in runner.events)


def test_drag_outside_workspace_rejected():
    sc = scenario_2d(t_c=1.0, obstacles=OBSTACLE_ON_PATH)
    runner = EpisodeRunner(sc)
    ok, msg = runner.apply_command({"kind": "drag", "id": 1, "position": [99.0, 0.0]})
    assert not ok and "workspace" in msg


def test_set_param_whitelist_enforced():
    sc = scenario_2d(t_c=1.0)
    runner = EpisodeRunner(sc)
    ok, msg = runner.apply_command({"kind": "set_param", "path": "plant.model",
                                    "value": "quad3d"})
    assert not ok
    ok, msg = runner.apply_command({"kind": "set_param", "path": "tube.k1",
                                    "value": 0.01})
    assert not ok and "k1*t_c" in msg
    ok, _ = runner.apply_command({"kind": "set_param", "path": "tube.k2", "value": 3.0})
    assert ok and runner.tube_cfg.k2[0] == 3.0


def test_numeric_abort_on_blowup():
    # obstacle scripted through the center inside one tick -> integrator
    # blow-up is detected and surfaced, not silently logged
    sc = scenario_2d(obstacles=[{"id": 9, "motion": {
        "kind": "waypoints", "times": [0.0, 0.2, 0.21],
        "points": [[8.0, 1.0], [8.0, 1.0], [1.70, 1.70]]}, "radius": 0.4}],
        workspace={"min": [0.0, 0.0], "max": [12.0, 12.0]})
    log = run_episode(sc, force=True)
    assert log.status in (NUMERIC_ABORT, MARGIN_BREACH, COLLISION)
    assert log.rows < 1000


def test_assumption2_monitor_aborts():
    sc = scenario_2d(t_c=1.0)
    runner = EpisodeRunner(sc)
    runner.plant.min_sym_eig = lambda x: -1.0
    while runner.tick():
        pass
    log = runner.finish()
    assert log.status == NUMERIC_ABORT
    assert any(kind == "assumption2_violation" for _, kind, _ in log.events)


def test_funnel_columns_logged_for_two_stage_plant():
    sc = scenario_2d(dims=3,
                     start={"center": [1.0, 1.0, 1.0]},
                     target={"center": [8.0, 8.0, 8.0]},
                     workspace={"min": [0.0, 0.0, 0.0], "max": [12.0, 12.0, 12.0]},
                     t_c=2.0,
                     plant={"model": "quad3d"},
                     controller={"kappa": [30.0, 160.0],
                                 "funnels": [[{"p": 30.0, "q": 6.0, "mu": 0.3}] * 3]},
                     obstacles=[])
    log = run_episode(sc)
    assert log.r is not None and log.r.shape == (2001, 1, 3)
    assert log.gamma is not None
    rep = audit_episode(log)
    names = [name for name, *_ in rep.checks]
    assert "funnel" in names
    assert rep.ok, str(rep)
