"""Closed-loop policies: tree search and MPC variants."""

from .base import BasePolicy
from .mpc import MpcPolicy
from .tree_search import TreeSearchPolicy

__all__ = ["BasePolicy", "MpcPolicy", "TreeSearchPolicy"]
