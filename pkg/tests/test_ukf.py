"""Tests for the unscented Kalman filter."""

import numpy as np
import pytest

from src.config import PlantSpec
from src.gaussian import Gaussian
from src.harness import init_trial
from src.plant import (
    HYPER_DIM,
    PARAMS,
    linearize,
    measurement,
    observe,
    step_truth,
    transition,
)
from src.policies.mpc import cautious_inflation_hook
from src.ukf import (
    FilterFailure,
    divergence_check,
    filter_step,
    predict,
    unscented_predict,
    unscented_update,
    update,
)


def test_predict_zero_covariance_follows_plant(unit_hyperstate):
    spec = PlantSpec(process_var=0.0)
    b = Gaussian(unit_hyperstate, np.zeros((HYPER_DIM, HYPER_DIM)))
    u = np.array([1.0, -2.0, 0.5])
    out = predict(b, u, spec)
    np.testing.assert_allclose(out.mean, transition(unit_hyperstate, u, spec), atol=1e-8)
    np.testing.assert_allclose(out.cov, np.zeros((HYPER_DIM, HYPER_DIM)), atol=1e-12)


def test_predict_grows_parameter_variance(small_belief, spec):
    out = predict(small_belief, np.zeros(3), spec)
    prior = np.diag(small_belief.cov)[PARAMS]
    assert np.all(np.diag(out.cov)[PARAMS] >= prior + spec.process_var - 1e-10)


def test_cautious_inflation_scales_predicted_growth(small_belief, spec):
    cautious = cautious_inflation_hook(spec, 4.0)
    base = np.diag(predict(small_belief, np.zeros(3), spec).cov)[PARAMS]
    inflated = np.diag(predict(small_belief, np.zeros(3), cautious).cov)[PARAMS]
    prior = np.diag(small_belief.cov)[PARAMS]
    np.testing.assert_allclose(inflated - prior, 4.0 * (base - prior), rtol=1e-6)


def test_update_with_consistent_observation_barely_moves(unit_hyperstate):
    spec = PlantSpec(process_var=0.0)
    b = Gaussian(unit_hyperstate, 1e-8 * np.eye(HYPER_DIM))
    u = np.array([0.5, 0.5, 0.0])
    o = measurement(unit_hyperstate, u)
    out = update(b, u, o, spec)
    assert np.max(np.abs(out.mean - b.mean)) < 1e-6


def test_scalar_update_matches_kalman_gain():
    var, r = 2.0, 0.5
    prior = Gaussian(np.array([0.0]), np.array([[var]]))
    out = unscented_update(prior, lambda x: x, np.array([1.0]), np.array([[r]]))
    assert out.mean[0] == pytest.approx(var / (var + r), abs=1e-8)
    assert out.cov[0, 0] == pytest.approx(var * r / (var + r), abs=1e-8)


def test_update_fails_on_invalid_innovation():
    prior = Gaussian(np.zeros(2), np.eye(2))
    with pytest.raises(FilterFailure):
        unscented_update(prior, lambda x: x, np.zeros(2), -10.0 * np.eye(2))


def test_update_clamps_parameter_mean(unit_hyperstate, spec):
    mean = unit_hyperstate.copy()
    mean[PARAMS] = 0.01
    b = Gaussian(mean, 1e-4 * np.eye(HYPER_DIM))
    out = update(b, np.zeros(3), measurement(mean, np.zeros(3)), spec)
    assert np.all(out.mean[PARAMS] >= spec.param_floor)


def test_filter_step_is_predict_then_update(small_belief, spec):
    u = np.array([1.0, 0.0, -1.0])
    o = measurement(transition(small_belief.mean, u, spec), u)
    expected = update(predict(small_belief, u, spec), u, o, spec)
    out = filter_step(small_belief, u, o, spec)
    np.testing.assert_array_equal(out.mean, expected.mean)
    np.testing.assert_array_equal(out.cov, expected.cov)


@pytest.mark.parametrize("seed", range(10))
def test_unscented_filter_equals_kalman_filter_on_linear_model(seed, spec):
    rng = np.random.default_rng(seed)
    a_mat, b_mat = linearize(rng.uniform(0.5, 2.0, 5), rng.uniform(-1, 1), spec)
    c_mat = np.hstack([np.eye(3), np.zeros((3, 3))])
    q, r = 0.01 * np.eye(6), 0.1 * np.eye(3)

    x = rng.normal(0, 1, 6)
    ukf = Gaussian(np.zeros(6), np.eye(6))
    kf_mean, kf_cov = np.zeros(6), np.eye(6)

    for _ in range(50):
        u = rng.uniform(-5, 5, 3)
        x = a_mat @ x + b_mat @ u + rng.multivariate_normal(np.zeros(6), q)
        z = c_mat @ x + rng.multivariate_normal(np.zeros(3), r)

        ukf = unscented_predict(ukf, lambda p, u=u: p @ a_mat.T + u @ b_mat.T, q)
        ukf = unscented_update(ukf, lambda p: p @ c_mat.T, z, r)

        kf_mean = a_mat @ kf_mean + b_mat @ u
        kf_cov = a_mat @ kf_cov @ a_mat.T + q
        s = c_mat @ kf_cov @ c_mat.T + r
        gain = kf_cov @ c_mat.T @ np.linalg.inv(s)
        kf_mean = kf_mean + gain @ (z - c_mat @ kf_mean)
        kf_cov = kf_cov - gain @ s @ gain.T

        np.testing.assert_allclose(ukf.mean, kf_mean, atol=1e-6)
        np.testing.assert_allclose(ukf.cov, kf_cov, atol=1e-6)


# ==================== Random closed-loop steps ====================


def _assert_psd(cov):
    assert np.array_equal(cov, cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    assert eigvals[0] >= -1e-9 * max(1.0, eigvals[-1])


@pytest.mark.parametrize("seed", range(20))
def test_covariance_stays_psd_over_random_steps(seed):
    spec = PlantSpec(process_var=0.01)
    rng = np.random.default_rng(seed)
    xi, b = init_trial(spec, rng)
    xi[PARAMS] = rng.uniform(0.5, 2.0, 5)

    for _ in range(50):
        u = rng.uniform(-spec.u_max, spec.u_max, 3)
        b = predict(b, u, spec)
        _assert_psd(b.cov)

        xi = step_truth(xi, u, spec, rng)
        b = update(b, u, observe(xi, u, spec, rng), spec)
        _assert_psd(b.cov)
        assert np.all(b.mean[PARAMS] >= spec.param_floor)


def test_informative_updates_shrink_parameter_uncertainty():
    spec = PlantSpec(process_var=0.0)
    rng = np.random.default_rng(3)
    xi, b = init_trial(spec, rng)
    xi[PARAMS] = [1.3, 0.7, 0.9, 0.4, 0.6]
    u = np.array([3.0, -2.0, 1.0])

    traces = [np.trace(b.cov[PARAMS, PARAMS])]
    for _ in range(30):
        xi = step_truth(xi, u, spec, rng)
        b = filter_step(b, u, observe(xi, u, spec), spec)
        traces.append(np.trace(b.cov[PARAMS, PARAMS]))

    traces = np.array(traces)
    assert np.all(np.diff(traces) <= 1e-6 * traces[:-1])
    assert traces[-1] < 0.5 * traces[0]


def test_non_finite_observation_model_is_a_filter_failure():
    prior = Gaussian(np.zeros(2), np.eye(2))
    with pytest.raises(FilterFailure):
        unscented_update(prior, lambda x: np.full_like(x, np.nan), np.zeros(2), np.eye(2))


# ==================== Divergence ====================


def test_no_divergence_at_the_mean(small_belief):
    assert not divergence_check(small_belief, small_belief.mean)


def test_divergence_on_six_sigma_error():
    b = Gaussian(np.zeros(HYPER_DIM), np.eye(HYPER_DIM))
    truth = np.zeros(HYPER_DIM)
    truth[3] = 6.0
    assert divergence_check(b, truth)


def test_no_divergence_on_one_sigma_error():
    b = Gaussian(np.zeros(HYPER_DIM), np.eye(HYPER_DIM))
    truth = np.zeros(HYPER_DIM)
    truth[3] = 1.0
    assert not divergence_check(b, truth)


def test_divergence_threshold_scales_with_eigenvalue():
    cov = np.eye(HYPER_DIM)
    cov[0, 0] = 4.0
    truth = np.zeros(HYPER_DIM)
    truth[0] = 9.0
    assert not divergence_check(Gaussian(np.zeros(HYPER_DIM), cov), truth)
