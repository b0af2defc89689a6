"""Unscented Kalman filter over the box-pushing hyperstate."""

from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .config import PlantSpec
from .gaussian import (
    JITTER_LADDER,
    Gaussian,
    SingularCovarianceError,
    project_psd,
    sigma_cross_covariance,
    sigma_points,
    symmetrize,
    unscented_transform,
)
from .plant import HYPER_DIM, OBS_DIM, PARAMS, measurement, transition

# Belief over the hyperstate
BeliefState = Gaussian

DIVERGENCE_SIGMAS = 5.0


class FilterFailure(RuntimeError):
    """Filter could not complete a predict/update step."""


def _require_finite(g: Gaussian, stage: str) -> Gaussian:
    if not (np.all(np.isfinite(g.mean)) and np.all(np.isfinite(g.cov))):
        raise FilterFailure(f"{stage}: non-finite moments")
    return g


def clamp_belief(b: BeliefState, floor: float) -> BeliefState:
    """Raise the parameter block of the mean to the floor."""
    mean = np.array(b.mean, copy=True)
    mean[PARAMS] = np.maximum(mean[PARAMS], floor)
    return BeliefState(mean=mean, cov=b.cov)


# ==================== Generic additive-noise UKF ====================


def unscented_predict(
    prior: Gaussian, f: Callable[[np.ndarray], np.ndarray], process_cov: np.ndarray
) -> Gaussian:
    """Propagate a Gaussian through f and add process covariance.

    Raises:
        FilterFailure: If the prior covariance cannot be factorized
    """
    try:
        points = sigma_points(prior)
    except SingularCovarianceError as e:
        raise FilterFailure(f"predict: {e}") from e
    return _require_finite(unscented_transform(points, f, noise_cov=process_cov), "predict")


def unscented_update(
    prior: Gaussian,
    h: Callable[[np.ndarray], np.ndarray],
    z: np.ndarray,
    meas_cov: np.ndarray,
) -> Gaussian:
    """Unscented measurement update.

    Args:
        prior: Predicted belief
        h: Batched measurement function
        z: Observation
        meas_cov: Measurement noise covariance

    Returns:
        Posterior with its covariance projected onto the PSD cone

    Raises:
        FilterFailure: If the prior or the innovation covariance is singular, or the
            moments are not finite
    """
    try:
        points = sigma_points(prior)
    except SingularCovarianceError as e:
        raise FilterFailure(f"update: {e}") from e

    predicted_z = np.asarray(h(points.points), dtype=float)
    if predicted_z.ndim == 1:
        predicted_z = predicted_z[:, None]
    innovation = unscented_transform(points, lambda _: predicted_z, noise_cov=meas_cov)
    _require_finite(innovation, "update")
    cross = sigma_cross_covariance(points, points.points, predicted_z)

    gain = None
    eye = np.eye(innovation.dim)
    for jitter in JITTER_LADDER:
        try:
            factor = cho_factor(innovation.cov + jitter * eye)
        except LinAlgError:
            continue
        gain = cho_solve(factor, cross.T).T
        break
    if gain is None:
        raise FilterFailure("innovation covariance is not invertible")

    mean = prior.mean + gain @ (np.asarray(z, dtype=float) - innovation.mean)
    cov = prior.cov - gain @ cross.T
    _require_finite(Gaussian(mean=mean, cov=cov), "update")
    return Gaussian(mean=mean, cov=project_psd(cov))


# ==================== Hyperstate filter ====================


def predict(b: BeliefState, u: np.ndarray, spec: PlantSpec) -> BeliefState:
    """Time update with the floored deterministic transition plus σ²_w I."""
    return unscented_predict(
        b, lambda pts: transition(pts, u, spec), spec.filter_q * np.eye(HYPER_DIM)
    )


def update(b: BeliefState, u: np.ndarray, o: np.ndarray, spec: PlantSpec) -> BeliefState:
    """Measurement update; posterior parameter means are floored."""
    posterior = unscented_update(
        b, lambda pts: measurement(pts, u), o, spec.filter_r * np.eye(OBS_DIM)
    )
    return clamp_belief(posterior, spec.param_floor)


def filter_step(b: BeliefState, u: np.ndarray, o: np.ndarray, spec: PlantSpec) -> BeliefState:
    """Predict then update."""
    return update(predict(b, u, spec), u, o, spec)


def divergence_check(b: BeliefState, xi_true: np.ndarray) -> bool:
    """True if the error exceeds 5 sqrt(λ) along any covariance eigenvector."""
    eigvals, eigvecs = eigh(symmetrize(b.cov))
    rotated = eigvecs.T @ (np.asarray(xi_true, dtype=float) - b.mean)
    limit = DIVERGENCE_SIGMAS * np.sqrt(np.clip(eigvals, 0.0, None))
    return bool(np.any(np.abs(rotated) > limit))
