"""Cross-entropy tuning of the four integer search hyperparameters."""

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from .config import CeConfig
from .ukf import FilterFailure

Objective = Callable[[np.ndarray], float]

HISTORY_COLUMNS = ("iteration", "best", "mean", "eig_max")


@dataclass(frozen=True)
class CeIteration:
    """One row of the tuning history.

    `best` is the best objective seen so far, `mean` the mean objective of
    this iteration's elites, `eig_max` the largest eigenvalue after refit.
    """

    iteration: int
    best: float
    mean: float
    eig_max: float


def integerize(sample: np.ndarray) -> np.ndarray:
    """Round half away from zero, then clamp at 1."""
    sample = np.asarray(sample, dtype=float)
    rounded = np.sign(sample) * np.floor(np.abs(sample) + 0.5)
    return np.maximum(rounded, 1.0).astype(int)


def _evaluate(objective: Objective, params: np.ndarray) -> float:
    try:
        value = float(objective(params))
    except (FilterFailure, ValueError, ArithmeticError) as e:
        logger.warning(f"Objective failed at {params.tolist()}: {e}")
        return -np.inf
    return value if np.isfinite(value) else -np.inf


def refit(elites: np.ndarray, ridge: float) -> Tuple[np.ndarray, np.ndarray]:
    """Maximum-likelihood mean and covariance of the elites plus a ridge."""
    mean = elites.mean(axis=0)
    cov = np.atleast_2d(np.cov(elites, rowvar=False, bias=True))
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(elites.shape[1])
    return mean, cov


def optimize(
    objective: Objective,
    cfg: CeConfig,
    rng: np.random.Generator,
    n_jobs: int = 1,
) -> Tuple[np.ndarray, List[CeIteration]]:
    """Run the cross-entropy method on an integer-valued objective.

    Args:
        objective: Maps an integer 4-vector to a score (higher is better)
        cfg: Population, elite, stopping and ridge settings
        rng: Generator used for all sampling
        n_jobs: joblib workers for population evaluation

    Returns:
        Tuple of (final continuous mean, per-iteration history)
    """
    mean = np.asarray(cfg.init_mean, dtype=float)
    cov = np.diag(np.asarray(cfg.init_cov, dtype=float))
    history: List[CeIteration] = []
    best = -np.inf

    for iteration in range(1, cfg.max_iters + 1):
        samples = rng.multivariate_normal(mean, cov, size=cfg.population)
        candidates = [integerize(s) for s in samples]

        scores = np.array(
            Parallel(n_jobs=n_jobs)(delayed(_evaluate)(objective, c) for c in candidates)
        )

        # Stable sort keeps sample order among ties
        order = np.argsort(-scores, kind="stable")[: cfg.elites]
        elite_scores = scores[order]
        mean, cov = refit(samples[order], cfg.ridge)

        best = max(best, float(elite_scores[0]))
        eig_max = float(np.max(np.linalg.eigvalsh(cov)))
        finite = elite_scores[np.isfinite(elite_scores)]
        elite_mean = float(finite.mean()) if finite.size else -np.inf
        history.append(CeIteration(iteration, best, elite_mean, eig_max))
        logger.info(
            f"CE iteration {iteration}: best {best:.3f}, elite mean {elite_mean:.3f}, "
            f"max eig {eig_max:.3f}, mean {np.round(mean, 2).tolist()}"
        )

        if eig_max < cfg.eig_threshold:
            logger.info(f"CE converged after {iteration} iterations")
            break

    return mean, history
