"""Base class shared by every closed-loop policy."""

from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np

from ..config import PlantSpec
from ..ukf import BeliefState


class BasePolicy(ABC):
    """Maps the current belief (and, for the oracle, the truth) to a control."""

    name: str = "policy"

    def __init__(self, spec: PlantSpec):
        """Initialize policy.

        Args:
            spec: Plant constants the policy plans with
        """
        self.spec = spec
        self.stats: Dict[str, int] = {"decisions": 0, "fallbacks": 0}

    @abstractmethod
    def act(
        self, belief: BeliefState, xi_true: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Choose a control inside the input box.

        Args:
            belief: Current filter belief
            xi_true: True hyperstate; only the oracle may read it
            rng: Policy-owned random stream

        Returns:
            Control [F_x, F_y, T]
        """

    def get_stats(self) -> Dict[str, Any]:
        """Get policy counters."""
        return dict(self.stats)
