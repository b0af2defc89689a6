"""Tests for the box-pushing plant."""

import numpy as np
import pytest

from src.config import PlantSpec
from src.plant import (
    MASS,
    P_THETA,
    PARAMS,
    STATE,
    V_W,
    V_X,
    accelerations,
    clamp_params,
    clip_control,
    linearize,
    make_hyperstate,
    measurement,
    observe,
    reward,
    step_truth,
    transition,
)


def _xi(state=(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), params=(1.0, 1.0, 1.0, 1.0, 1.0)):
    return make_hyperstate(state, params)


# ==================== Dynamics ====================


def test_rest_without_input_has_no_acceleration():
    np.testing.assert_array_equal(accelerations(_xi(), np.zeros(3)), np.zeros(3))


def test_push_along_x_rotates_about_offset():
    np.testing.assert_allclose(accelerations(_xi(), np.array([1.0, 0.0, 0.0])), [1.0, 0.0, 1.0])


def test_friction_opposes_velocity():
    xi = _xi(state=(0.0, 0.0, 0.0, 1.0, 0.0, 0.0))
    np.testing.assert_allclose(accelerations(xi, np.zeros(3)), [-1.0, 0.0, -1.0])


def test_accelerations_are_batched():
    rng = np.random.default_rng(0)
    xis = np.abs(rng.normal(1.0, 0.3, (4, 11)))
    us = rng.uniform(-5, 5, (4, 3))
    batched = accelerations(xis, us)
    for i in range(4):
        np.testing.assert_allclose(batched[i], accelerations(xis[i], us[i]))


def test_noiseless_step_keeps_resting_box_in_place():
    spec = PlantSpec(process_var=0.0)
    xi = _xi(state=(0.3, -0.2, 0.1, 0.0, 0.0, 0.0))
    nxt = step_truth(xi, np.zeros(3), spec, np.random.default_rng(0))
    np.testing.assert_array_equal(nxt, xi)


def test_kinematics_with_floor_friction():
    spec = PlantSpec(process_var=0.0)
    xi = _xi(state=(0.0, 0.0, 0.0, 1.0, 0.0, 0.0), params=(1.0, spec.param_floor, 1.0, 1.0, 1.0))
    nxt = transition(xi, np.zeros(3), spec)
    np.testing.assert_allclose(nxt[:3], [0.1, 0.0, 0.0])


def test_step_truth_clamps_parameters_at_floor():
    spec = PlantSpec(process_var=100.0)
    hits = 0
    for seed in range(20):
        nxt = step_truth(_xi(), np.zeros(3), spec, np.random.default_rng(seed))
        assert np.all(nxt[PARAMS] >= spec.param_floor)
        hits += int(nxt[MASS] == spec.param_floor)
    assert hits > 0


def test_step_truth_draws_fixed_noise_count():
    spec = PlantSpec()
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    step_truth(_xi(), np.zeros(3), spec, a)
    b.standard_normal(11)
    assert a.random() == b.random()


# ==================== Observation ====================


def test_static_box_observation():
    xi = _xi(params=(1.0, 1.0, 1.0, 1.0, 0.0))
    obs = observe(xi, np.zeros(3), PlantSpec())
    np.testing.assert_allclose(obs[:2], [1.0, 0.0])
    np.testing.assert_allclose(obs[6:], np.zeros(3))


def test_spinning_box_observation():
    xi = _xi(state=(0.0, 0.0, 0.0, 0.0, 0.0, 1.0), params=(1.0, 1e-3, 1.0, 1.0, 0.0))
    obs = measurement(xi, np.zeros(3))
    np.testing.assert_allclose(obs[3:5], [0.0, 1.0])
    assert obs[V_W] == pytest.approx(1.0)
    assert obs[6] == pytest.approx(-1.0)
    assert obs[7] == pytest.approx(0.0)


def test_offset_vanishing_reads_center_of_mass():
    xi = _xi(state=(0.4, -0.1, 0.3, 0.2, 0.1, -0.5), params=(1.0, 1.0, 1.0, 0.0, 0.0))
    u = np.array([1.0, -1.0, 0.5])
    obs = measurement(xi, u)
    np.testing.assert_allclose(obs[:6], xi[STATE])
    np.testing.assert_allclose(obs[6:], accelerations(xi, u))


def test_orientation_rotates_offset():
    xi = _xi(state=(0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0), params=(1.0, 1.0, 1.0, 1.0, 0.0))
    obs = measurement(xi, np.zeros(3))
    np.testing.assert_allclose(obs[:2], [0.0, 1.0], atol=1e-12)
    assert obs[P_THETA] == pytest.approx(np.pi / 2)


def test_observation_noise_only_when_variance_positive():
    xi = _xi()
    spec = PlantSpec(meas_var=0.1)
    noisy = observe(xi, np.zeros(3), spec, np.random.default_rng(0))
    assert not np.allclose(noisy, measurement(xi, np.zeros(3)))
    clean = observe(xi, np.zeros(3), PlantSpec(), np.random.default_rng(0))
    np.testing.assert_array_equal(clean, measurement(xi, np.zeros(3)))


# ==================== Reward ====================


def test_reward_at_origin_is_zero(spec):
    assert reward(np.zeros(6), np.zeros(3), spec) == 0.0


def test_reward_position_weight(spec):
    assert reward(np.array([1.0, 0, 0, 0, 0, 0]), np.zeros(3), spec) == pytest.approx(-2.5)


def test_reward_velocity_and_effort(spec):
    x = np.array([0, 0, 0, 0.1, 0, 0])
    assert reward(x, np.ones(3), spec) == pytest.approx(-5.9)


def test_reward_is_batched(spec):
    x = np.array([[1.0, 0, 0, 0, 0, 0], np.zeros(6)])
    np.testing.assert_allclose(reward(x, np.zeros((2, 3)), spec), [-2.5, 0.0])


def test_clip_control(spec):
    np.testing.assert_array_equal(clip_control(np.array([7.0, -9.0, 1.0]), spec), [5.0, -5.0, 1.0])


# ==================== Linearization ====================


def test_linearize_input_matrix(spec):
    _, b_mat = linearize(np.ones(5), 0.0, spec)
    assert b_mat[V_X, 0] == pytest.approx(0.1)
    assert b_mat[V_W, 2] == pytest.approx(0.1)
    assert b_mat[V_W, 0] == pytest.approx(0.1)
    assert b_mat[V_W, 1] == pytest.approx(0.1)


def test_linearize_includes_friction(spec):
    a_mat, _ = linearize(np.ones(5), 0.0, spec)
    assert a_mat[V_X, V_X] == pytest.approx(0.9)
    assert a_mat[0, V_X] == pytest.approx(0.1)


def test_linearization_matches_transition(spec):
    rng = np.random.default_rng(1)
    for _ in range(10):
        xi = make_hyperstate(rng.normal(0, 1, 6), rng.uniform(0.2, 2.0, 5))
        u = rng.uniform(-5, 5, 3)
        a_mat, b_mat = linearize(xi[PARAMS], xi[P_THETA], spec)
        np.testing.assert_allclose(
            a_mat @ xi[STATE] + b_mat @ u, transition(xi, u, spec)[STATE], atol=1e-12
        )


def test_linearize_rejects_sub_floor_parameters(spec):
    with pytest.raises(ValueError):
        linearize(np.array([1.0, 1.0, 0.01, 1.0, 1.0]), 0.0, spec)


def test_clamp_params_leaves_state_and_input_untouched():
    xi = _xi(state=(-3.0, 0.0, 0.0, -1.0, 0.0, 0.0), params=(-1.0, 0.01, 2.0, 0.0, 0.5))
    out = clamp_params(xi, 0.0625)
    np.testing.assert_array_equal(out[STATE], xi[STATE])
    np.testing.assert_array_equal(out[PARAMS], [0.0625, 0.0625, 2.0, 0.0625, 0.5])
    assert xi[MASS] == -1.0


def test_parameters_never_drop_below_floor_over_long_runs():
    spec = PlantSpec(process_var=0.05, param_floor=0.0625)
    rng = np.random.default_rng(8)
    xi = _xi(params=np.full(5, spec.param_floor))
    lowest = np.inf
    for _ in range(10_000):
        xi = step_truth(xi, rng.uniform(-spec.u_max, spec.u_max, 3), spec, rng)
        lowest = min(lowest, xi[PARAMS].min())
        xi[STATE] = 0.0  # only the parameter walk is under test
    assert lowest >= spec.param_floor
