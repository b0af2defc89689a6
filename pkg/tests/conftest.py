"""Shared fixtures."""

import numpy as np
import pytest

from src.config import ExperimentConfig, PlantSpec, Policy, SearchParams, build_experiment
from src.gaussian import Gaussian
from src.plant import HYPER_DIM, make_hyperstate


@pytest.fixture
def spec() -> PlantSpec:
    return PlantSpec()


@pytest.fixture
def noiseless_spec() -> PlantSpec:
    return PlantSpec(process_var=0.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def unit_hyperstate() -> np.ndarray:
    """Box at rest slightly off the origin with all parameters 1."""
    return make_hyperstate([0.5, -0.3, 0.2, 0.0, 0.0, 0.0], np.ones(5))


@pytest.fixture
def point_belief(unit_hyperstate) -> Gaussian:
    return Gaussian(mean=unit_hyperstate, cov=np.zeros((HYPER_DIM, HYPER_DIM)))


@pytest.fixture
def small_belief(unit_hyperstate) -> Gaussian:
    cov = np.diag(np.concatenate([np.full(6, 1e-4), np.full(5, 1e-2)]))
    return Gaussian(mean=unit_hyperstate, cov=cov)


@pytest.fixture
def quick_config() -> ExperimentConfig:
    """A few short MPC trials."""
    return build_experiment(
        "desk",
        {
            "policy": Policy.MPC.value,
            "trials": 2,
            "seed": 7,
            "spec": {"horizon_steps": 4},
            "mpc": {"horizon": 4},
        },
    )


@pytest.fixture
def tiny_search() -> SearchParams:
    return SearchParams(node_budget=30, depth=3)
