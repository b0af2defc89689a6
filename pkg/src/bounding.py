"""Probabilistic bounding heuristic: keep the next-state norm under beta_des."""

from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from .config import BoundingParams, PlantSpec
from .gaussian import chi2_quantile, confidence_ellipsoid, sample_in_ellipsoid
from .plant import CONTROL_DIM, PARAMS, STATE, STATE_DIM, clamp_params, transition
from .ukf import BeliefState


def beta_w(spec: PlantSpec, alpha: float) -> float:
    """Largest semi-axis of the process-noise confidence region on the physical state."""
    if spec.filter_q <= 0.0:
        return 0.0
    return float(np.sqrt(spec.filter_q * chi2_quantile(STATE_DIM, 1.0 - alpha)))


def belief_samples(
    b: BeliefState, params: BoundingParams, spec: PlantSpec, rng: np.random.Generator
) -> np.ndarray:
    """Uniform samples of the belief confidence region with sub-floor parameters dropped.

    Falls back to the floored mean when every sample is truncated.
    """
    region = confidence_ellipsoid(b, params.alpha)
    samples = sample_in_ellipsoid(region, params.n_b, rng)
    kept = samples[np.all(samples[:, PARAMS] >= spec.param_floor, axis=1)]
    if kept.shape[0] == 0:
        return clamp_params(b.mean, spec.param_floor)[None, :]
    return kept


def max_next_norm(samples: np.ndarray, u: np.ndarray, spec: PlantSpec) -> float:
    """Largest Euclidean norm of the noise-free next physical state over the samples."""
    nxt = transition(samples, u, spec)[:, STATE]
    return float(np.max(np.linalg.norm(nxt, axis=1)))


def beta_b(
    b: BeliefState,
    u: np.ndarray,
    params: BoundingParams,
    spec: PlantSpec,
    rng: np.random.Generator,
) -> float:
    """Sampled worst-case next-state norm over the belief confidence region."""
    return max_next_norm(belief_samples(b, params, spec, rng), u, spec)


def filter_action(
    b: BeliefState,
    params: BoundingParams,
    spec: PlantSpec,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, bool]:
    """Draw box-uniform actions until one passes beta_w + beta_b <= beta_des.

    Returns:
        Tuple of (action, within_bound); after n_u failures the last draw is
        returned with within_bound False
    """
    return BoundingFilter(params, spec)(b, rng)


class BoundingFilter:
    """Action filter hook used by the tree search."""

    def __init__(self, params: BoundingParams, spec: PlantSpec):
        """Initialize bounding filter.

        Args:
            params: Bound, significance, draw and sample counts
            spec: Plant constants used for propagation
        """
        self.params = params
        self.spec = spec
        self.beta_w = beta_w(spec, params.alpha)
        self.stats: Dict[str, int] = {"calls": 0, "accepted": 0, "exhausted": 0, "draws": 0}

    def within(self, samples: np.ndarray, u: np.ndarray) -> bool:
        """Acceptance test for one action."""
        return self.beta_w + max_next_norm(samples, u, self.spec) <= self.params.beta_des

    def __call__(
        self,
        b: BeliefState,
        rng: np.random.Generator,
        candidate: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, bool]:
        """Accept the candidate if it passes, otherwise run the retry loop.

        Args:
            b: Belief at the node being expanded
            rng: Planner random stream
            candidate: Proposal to test before any uniform draws

        Returns:
            Tuple of (action, within_bound)
        """
        self.stats["calls"] += 1
        samples = belief_samples(b, self.params, self.spec, rng)

        if candidate is not None and self.within(samples, candidate):
            self.stats["accepted"] += 1
            return np.asarray(candidate, dtype=float), True

        u = np.zeros(CONTROL_DIM)
        for _ in range(self.params.n_u):
            u = rng.uniform(-self.spec.u_max, self.spec.u_max, CONTROL_DIM)
            self.stats["draws"] += 1
            if self.within(samples, u):
                self.stats["accepted"] += 1
                return u, True

        self.stats["exhausted"] += 1
        logger.debug(f"Bounding filter exhausted {self.params.n_u} draws")
        return u, False

    def get_stats(self) -> Dict[str, Any]:
        """Get filter counters."""
        return dict(self.stats)
