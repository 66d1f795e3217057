import numpy as np
import pytest

from sttnav.plant import (DisturbanceSampler, builtin_models, make_plant,
                          step_plant)


def test_builtin_catalog():
    assert set(builtin_models()) == {"gen_pf", "omni2d", "quad3d"}
    omni = make_plant("omni2d")
    assert (omni.n_stages, omni.n) == (1, 2)
    quad = make_plant("quad3d")
    assert (quad.n_stages, quad.n) == (2, 3)


def test_unknown_model_rejected():
    with pytest.raises(ValueError):
        make_plant("hovercraft")


def test_single_integrator_step_is_exact():
    omni = make_plant("omni2d")
    x = omni.initial_state(np.array([0.0, 0.0]))
    x1 = step_plant(omni, x, np.array([1.0, 0.0]), 0.0, 0.001)
    assert np.allclose(x1[0], [0.001, 0.0], atol=1e-18)


def test_quad_velocity_feeds_position():
    quad = make_plant("quad3d", {"drag": 0.0})
    x = quad.initial_state(np.array([0.0, 0.0, 0.0]))
    x[1] = [1.0, 0.0, 0.0]
    x1 = step_plant(quad, x, np.zeros(3), 0.0, 0.01)
    assert np.allclose(x1[0], [0.01, 0.0, 0.0], atol=1e-15)
    assert np.allclose(x1[1], [1.0, 0.0, 0.0], atol=1e-15)


def test_quad_drag_decelerates():
    quad = make_plant("quad3d", {"drag": 0.1})
    x = quad.initial_state(np.zeros(3))
    x[1] = [10.0, -10.0, 0.0]
    x1 = step_plant(quad, x, np.zeros(3), 0.0, 0.01)
    assert x1[1, 0] < 10.0
    assert x1[1, 1] > -10.0  # drag opposes motion in both signs


def test_gen_pf_assumption2_floor():
    gen = make_plant("gen_pf", {"b1": 2.0, "b2": 2.0, "skew": 0.7})
    for _ in range(10):
        x = np.random.default_rng(5).uniform(-3, 3, (2, 2))
        assert gen.min_sym_eig(x) == pytest.approx(2.0, abs=1e-12)


def test_gen_pf_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        make_plant("gen_pf", {"b1": 0.0})


def test_sampler_bound_and_mean():
    s = DisturbanceSampler(0.1, seed=42)
    w = s.draw_block(10000, 1, 2)
    assert np.abs(w).max() <= 0.1
    assert abs(w.mean()) < 0.005


def test_sampler_deterministic_and_block_equals_stream():
    a = DisturbanceSampler(0.5, seed=9).draw_block(50, 2, 3)
    b = DisturbanceSampler(0.5, seed=9).draw_block(50, 2, 3)
    assert np.array_equal(a, b)
    s = DisturbanceSampler(0.5, seed=9)
    seq = np.stack([s.draw(2, 3) for _ in range(50)])
    assert np.array_equal(a, seq)


def test_sampler_zero_bound_is_zero():
    s = DisturbanceSampler(0.0, seed=1)
    assert not s.draw(2, 3).any()


def test_fast_plant_steps_match_generic():
    import sttnav._fast as fast
    if not fast.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(3)
    omni = make_plant("omni2d")
    for _ in range(20):
        x = rng.uniform(-5, 5, (1, 2))
        u = rng.uniform(-3, 3, 2)
        w = rng.uniform(-0.1, 0.1, (1, 2))
        ref = step_plant(omni, x, u, 0.0, 1e-3, w)
        out = np.empty_like(x)
        fast.omni2d_step(x, u, w, 1e-3, out)
        assert np.allclose(out, ref, atol=1e-18)
    quad = make_plant("quad3d", {"drag": 0.1})
    for _ in range(20):
        x = rng.uniform(-5, 5, (2, 3))
        u = rng.uniform(-3, 3, 3)
        w = rng.uniform(-0.1, 0.1, (2, 3))
        ref = step_plant(quad, x, u, 0.0, 1e-3, w)
        out = np.empty_like(x)
        fast.quad3d_step(x, u, w, 1e-3, 0.1, out)
        assert np.allclose(out, ref, atol=1e-15)


def test_step_plant_rejects_bad_dt():
    omni = make_plant("omni2d")
    with pytest.raises(ValueError):
        step_plant(omni, omni.initial_state(np.zeros(2)), np.zeros(2), 0.0, 0.0)
