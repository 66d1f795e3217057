import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttnav.controller import (ControlLoop, ControllerConfig, FunnelParams,
                               control, funnel_bound, resolve_funnels,
                               stage1_reference, stage1_transform,
                               stagek_transform)
from sttnav.tube import TubeState

TUBE = TubeState(0.0, np.array([0.0, 0.0]), 0.9)


def tube_at(sigma, rho):
    return TubeState(0.0, np.asarray(sigma, dtype=float), rho)


# -- stage 1 --------------------------------------------------------------------

def test_stage1_zero_error_at_center():
    e1, eps1, clamped = stage1_transform(np.array([0.0, 0.0]), TUBE)
    assert (e1, eps1, clamped) == (0.0, 0.0, False)


def test_stage1_frozen_values():
    tube = tube_at([0.0, 0.0], 1.0)
    e1, eps1, _ = stage1_transform(np.array([0.5, 0.0]), tube)
    assert eps1 == pytest.approx(1.0986122886681098, abs=1e-12)
    e1, eps1, _ = stage1_transform(np.array([0.9, 0.0]), tube)
    assert eps1 == pytest.approx(2.9444389791664403, abs=1e-12)


def test_stage1_clamps_outside_tube():
    e1, eps1, clamped = stage1_transform(np.array([5.0, 0.0]), TUBE)
    assert clamped and e1 == 1.0 - 1e-9 and math.isfinite(eps1)


def test_stage1_reference_frozen_value():
    rho = 0.9
    tube = tube_at([0.0, 0.0], rho)
    r2, _ = stage1_reference(np.array([0.5 * rho, 0.0]), tube, kappa1=2.0)
    assert np.allclose(r2, [-rho * math.log(3.0), 0.0], atol=1e-12)


def test_stage1_reference_zero_at_center():
    r2, _ = stage1_reference(np.array([0.0, 0.0]), TUBE, kappa1=2.0)
    assert np.array_equal(r2, [0.0, 0.0])


def test_stage1_reference_points_inward(rng):
    for _ in range(50):
        sigma = rng.uniform(-3, 3, 2)
        rho = float(rng.uniform(0.2, 2.0))
        x1 = sigma + rng.uniform(-1, 1, 2) * rho
        r2, _ = stage1_reference(x1, tube_at(sigma, rho), kappa1=float(rng.uniform(0.1, 5)))
        assert float(r2 @ (x1 - sigma)) <= 1e-12


def test_stage1_clamped_output_continuous():
    # output at e = 1-eps equals output for any input beyond it (same direction)
    tube = tube_at([0.0, 0.0], 1.0)
    lim = 1.0 - 1e-9
    r_at, _ = stage1_reference(np.array([lim, 0.0]), tube, 3.0)
    r_beyond, _ = stage1_reference(np.array([7.3, 0.0]), tube, 3.0)
    assert np.allclose(r_at, r_beyond, rtol=1e-9)


# -- funnel bound ----------------------------------------------------------------

def test_funnel_bound_endpoints_and_frozen_value():
    fp = FunnelParams(2.0, 0.1, 1.0)
    assert funnel_bound(0.0, fp) == 2.0
    assert funnel_bound(1e9, fp) == pytest.approx(0.1)
    assert funnel_bound(1.0, fp) == pytest.approx(0.7989709382257404, abs=1e-12)


def test_funnel_bound_monotone_nonincreasing():
    fp = FunnelParams(3.0, 0.5, 0.7)
    ts = np.linspace(0, 20, 100)
    vals = [funnel_bound(float(t), fp) for t in ts]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_funnel_params_validation():
    with pytest.raises(ValueError):
        FunnelParams(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        FunnelParams(2.0, 0.1, -1.0)


# -- stage k ---------------------------------------------------------------------

def test_stagek_centered():
    e, eps, xi, clamped = stagek_transform([1.0, 2.0], [1.0, 2.0], [1.0, 1.0])
    assert np.array_equal(e, [0.0, 0.0])
    assert np.array_equal(eps, [0.0, 0.0])
    assert np.array_equal(xi, [4.0, 4.0])
    assert not clamped


def test_stagek_frozen_values():
    # e = 0.5 with gamma = 2 -> xi = 4/(2*0.75), eps = ln 3
    e, eps, xi, _ = stagek_transform([1.0], [0.0], [2.0])
    assert e[0] == pytest.approx(0.5)
    assert eps[0] == pytest.approx(math.log(3.0), abs=1e-12)
    assert xi[0] == pytest.approx(4.0 / (2.0 * 0.75), abs=1e-12)
    _, _, xi, _ = stagek_transform([0.0], [0.0], [0.5])
    assert xi[0] == pytest.approx(8.0, abs=1e-12)


def test_stagek_clamps_componentwise():
    e, eps, xi, clamped = stagek_transform([5.0, 0.0], [0.0, 0.0], [1.0, 1.0])
    assert clamped
    assert e[0] == 1.0 - 1e-9 and e[1] == 0.0
    assert np.isfinite(eps).all() and np.isfinite(xi).all()


@given(st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
@settings(max_examples=200, deadline=None)
def test_eps_odd_and_monotone(a, b):
    ea, _, _, _ = stagek_transform([a], [0.0], [1.0])
    fa = math.log((1 + ea[0]) / (1 - ea[0]))
    eb, _, _, _ = stagek_transform([b], [0.0], [1.0])
    fb = math.log((1 + eb[0]) / (1 - eb[0]))
    if a < b:
        assert fa <= fb
        if b - a > 1e-9:
            assert fa < fb
    neg, _, _, _ = stagek_transform([-a], [0.0], [1.0])
    fneg = math.log((1 + neg[0]) / (1 - neg[0]))
    assert fneg == pytest.approx(-fa, abs=1e-9)


def test_xi_floor_at_4_over_gamma(rng):
    for _ in range(50):
        gamma = float(rng.uniform(0.2, 5.0))
        e_val = float(rng.uniform(-0.99, 0.99))
        _, _, xi, _ = stagek_transform([e_val * gamma], [0.0], [gamma])
        assert xi[0] >= 4.0 / gamma - 1e-12
        if abs(e_val) < 1e-12:
            assert xi[0] == pytest.approx(4.0 / gamma)


# -- full recursion ----------------------------------------------------------------

def test_control_depth_one_is_stage1_reference():
    cfg = ControllerConfig([2.5], ())
    x = np.array([[0.3, 0.1]])
    u, trace = control(x, TUBE, cfg, 0.0)
    r2, _ = stage1_reference(x[0], TUBE, 2.5)
    assert np.allclose(u, r2, atol=1e-15)
    assert trace.e1 > 0


def test_control_two_stage_equilibrium():
    fp = FunnelParams(2.0, 0.5, 1.0)
    cfg = ControllerConfig([1.0, 1.0], ((fp, fp),))
    x = np.array([[0.0, 0.0], [0.0, 0.0]])  # x1 = sigma, x2 = 0 = r2
    u, trace = control(x, TUBE, cfg, 0.3)
    assert np.array_equal(u, [0.0, 0.0])


def test_control_matches_hand_rolled_composition(rng):
    fp_row = tuple(FunnelParams(float(rng.uniform(1, 3)), 0.2, 0.5) for _ in range(2))
    kappa = [1.7, 0.8]
    cfg = ControllerConfig(kappa, (fp_row,))
    for _ in range(25):
        sigma = rng.uniform(-2, 2, 2)
        rho = float(rng.uniform(0.3, 1.5))
        tube = tube_at(sigma, rho)
        x1 = sigma + rng.uniform(-0.9, 0.9, 2) * rho / math.sqrt(2)
        x2 = rng.uniform(-1, 1, 2)
        t = float(rng.uniform(0, 5))
        u, trace = control(np.array([x1, x2]), tube, cfg, t)
        # independent composition of the three published operations
        r2, _ = stage1_reference(x1, tube, kappa[0])
        gamma = np.array([funnel_bound(t, fp) for fp in fp_row])
        e, eps, xi, _ = stagek_transform(x2, r2, gamma)
        assert np.allclose(u, -kappa[1] * xi * eps, atol=1e-12)
        assert np.allclose(trace.r[0], r2, atol=1e-15)


def test_control_never_nan_for_garbage_inputs():
    fp = FunnelParams(1.0, 0.1, 0.0)
    cfg = ControllerConfig([1.0, 1.0], ((fp, fp),))
    x = np.array([[1e9, -1e9], [-1e12, 1e12]])
    u, trace = control(x, TUBE, cfg, 0.0)
    assert np.isfinite(u).all()
    assert "tube_exit" in trace.events and "funnel_exit" in trace.events


def test_control_is_model_free_by_signature():
    params = inspect.signature(control).parameters
    assert set(params) == {"x_stack", "tube", "cfg", "t"}


def test_resolve_funnels_defaults_satisfy_init_condition():
    cfg = ControllerConfig([2.0, 1.0], None)
    x0 = np.array([[0.3, 0.0], [1.5, -4.0]])
    tube = tube_at([0.0, 0.0], 0.9)
    resolved = resolve_funnels(cfg, x0, tube)
    r2, _ = stage1_reference(x0[0], tube, 2.0)
    for i, fp in enumerate(resolved.funnels[0]):
        assert abs(x0[1, i] - r2[i]) <= fp.p
        assert fp.p == pytest.approx(2.0 * abs(x0[1, i] - r2[i]) + 1.0)


def test_control_requires_resolved_funnels():
    cfg = ControllerConfig([1.0, 1.0], None)
    with pytest.raises(ValueError):
        control(np.zeros((2, 2)), TUBE, cfg, 0.0)


def test_control_loop_matches_reference_implementation(rng):
    fp_row = tuple(FunnelParams(2.5, 0.3, 0.8) for _ in range(3))
    cfg = ControllerConfig([2.0, 3.0], (fp_row,))
    loop = ControlLoop(cfg, 3)
    tube = tube_at([1.0, 2.0, 3.0], 0.7)
    for _ in range(30):
        x = np.vstack([tube.sigma + rng.uniform(-0.4, 0.4, 3),
                       rng.uniform(-2, 2, 3)])
        t = float(rng.uniform(0, 4))
        u_ref, trace = control(x, tube, cfg, t)
        u, e1, rs, gammas, _es, c1, ck = loop.compute(x, tube.sigma, tube.rho, t)
        assert np.allclose(u, u_ref, atol=1e-12)
        assert e1 == pytest.approx(trace.e1, abs=1e-15)
        assert np.allclose(rs[0], trace.r[0], atol=1e-12)
        assert np.allclose(gammas[0], trace.gamma[0], atol=1e-15)
