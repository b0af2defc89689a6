"""Generative model of the belief-MDP and the QMDP mean propagation."""

from typing import Tuple

import numpy as np

from .config import PlantSpec
from .gaussian import SingularCovarianceError, sample_mvn
from .plant import OBS_DIM, STATE, clamp_params, measurement, reward, transition
from .ukf import BeliefState, FilterFailure, filter_step


def generative(
    b: BeliefState, u: np.ndarray, spec: PlantSpec, rng: np.random.Generator
) -> Tuple[BeliefState, float]:
    """Sample the next belief and the reward at the current mean.

    A hyperstate is drawn from b, stepped without noise, observed with the
    filter's measurement variance, and the observation is fed to the filter.

    Raises:
        FilterFailure: If the imagined filter update fails
    """
    r = reward(b.mean[STATE], u, spec)
    try:
        xi = clamp_params(sample_mvn(b, rng), spec.param_floor)
    except SingularCovarianceError as e:
        raise FilterFailure(f"belief sample: {e}") from e
    nxt = transition(xi, u, spec)
    o = measurement(nxt, u) + np.sqrt(spec.filter_r) * rng.standard_normal(OBS_DIM)
    return filter_step(b, u, o, spec), r


def mean_propagate(
    xi_hat: np.ndarray, u: np.ndarray, spec: PlantSpec
) -> Tuple[np.ndarray, float]:
    """Treat the mean as the true hyperstate and step it exactly."""
    return transition(xi_hat, u, spec), reward(np.asarray(xi_hat)[STATE], u, spec)
