"""MCTS with double progressive widening over the UKF belief-MDP, and QMDP-TS."""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..belief_mdp import generative, mean_propagate
from ..config import MpcParams, PlantSpec, SearchMode, SearchParams
from ..gaussian import Gaussian, SingularCovarianceError, sample_mvn
from ..plant import CONTROL_DIM, PARAMS, STATE, clamp_params
from ..ukf import BeliefState, FilterFailure
from .base import BasePolicy
from .mpc import plan as mpc_plan

ActionFilter = Callable[..., Tuple[np.ndarray, bool]]

MAX_ITERATIONS_PER_NODE = 50


@dataclass(eq=False)
class ActionNode:
    """Square node of the tree: a control with its visit count and value."""

    u: np.ndarray
    within_bound: bool = True
    n: int = 0
    q: float = 0.0
    return_sum: float = 0.0
    children: List["BeliefNode"] = field(default_factory=list)


@dataclass(eq=False)
class BeliefNode:
    """Circle node: a belief plus the reward of the transition into it."""

    belief: BeliefState
    reward: float = 0.0
    mean_only: bool = False
    n: int = 0
    children: List[ActionNode] = field(default_factory=list)


@dataclass
class SearchTree:
    """One planning call's tree with its node budget."""

    root: BeliefNode
    budget: int
    n_nodes: int = 1
    worst_rollout: float = 0.0
    stats: Dict[str, int] = field(
        default_factory=lambda: {"iterations": 0, "filter_failures": 0, "transient_leaves": 0}
    )

    def can_grow(self) -> bool:
        return self.n_nodes < self.budget

    def record_leaf(self, value: float) -> float:
        """Track the worst rollout estimate; penalty leaves never pass through here."""
        self.worst_rollout = min(self.worst_rollout, value)
        return value

    def add_action(self, node: BeliefNode, u: np.ndarray, within_bound: bool) -> ActionNode:
        child = ActionNode(u=np.asarray(u, dtype=float), within_bound=within_bound)
        node.children.append(child)
        self.n_nodes += 1
        return child

    def add_belief(self, action: ActionNode, child: BeliefNode) -> BeliefNode:
        action.children.append(child)
        self.n_nodes += 1
        return child


def dpw_cap(k: float, visits: int, exponent: float) -> int:
    """Maximum number of children allowed after `visits` visits."""
    return math.ceil(k * max(visits, 1) ** exponent)


def ucb_select(node: BeliefNode, explore_c: float) -> ActionNode:
    """Unvisited children first (insertion order), then the highest UCB score."""
    for child in node.children:
        if child.n == 0:
            return child
    log_n = math.log(node.n)
    scores = [c.q + explore_c * math.sqrt(log_n / c.n) for c in node.children]
    return node.children[int(np.argmax(scores))]


def propose_action(
    b: BeliefState,
    spec: PlantSpec,
    rng: np.random.Generator,
    action_filter: Optional[ActionFilter] = None,
    epsilon_mpc: float = 0.8,
    mpc_params: Optional[MpcParams] = None,
) -> Tuple[np.ndarray, bool]:
    """Epsilon-greedy proposal: a box-uniform action, or MPC on a belief sample.

    Returns:
        Tuple of (action, within_bound); within_bound is True without a filter
    """
    mpc_params = mpc_params or MpcParams()
    if rng.random() < epsilon_mpc:
        if action_filter is not None:
            return action_filter(b, rng)
        return rng.uniform(-spec.u_max, spec.u_max, CONTROL_DIM), True

    try:
        xi = clamp_params(sample_mvn(b, rng), spec.param_floor)
    except SingularCovarianceError:
        xi = clamp_params(b.mean, spec.param_floor)
    u = mpc_plan(xi[STATE], xi[PARAMS], mpc_params, spec).first
    if action_filter is not None:
        return action_filter(b, rng, candidate=u)
    return u, True


def rollout(
    b_or_mean: BeliefState | np.ndarray,
    depth: int,
    spec: PlantSpec,
    mpc_params: Optional[MpcParams] = None,
    discount: float = 0.99,
) -> float:
    """Discounted return of the open-loop MPC plan replayed on the mean.

    The MPC is solved once with horizon min(H, depth); steps beyond it use
    zero control.
    """
    if depth <= 0:
        return 0.0
    mpc_params = mpc_params or MpcParams()
    xi = np.asarray(b_or_mean.mean if isinstance(b_or_mean, Gaussian) else b_or_mean, dtype=float)
    xi = clamp_params(xi, spec.param_floor)

    horizon = min(mpc_params.horizon, depth)
    solution = mpc_plan(xi[STATE], xi[PARAMS], mpc_params, spec, horizon=horizon)
    inputs = solution.inputs if solution.ok else np.zeros((horizon, CONTROL_DIM))

    value, weight = 0.0, 1.0
    for t in range(depth):
        u = inputs[t] if t < horizon else np.zeros(CONTROL_DIM)
        xi, r = mean_propagate(xi, u, spec)
        value += weight * r
        weight *= discount
    return value


class TreeSearchPlanner:
    """Builds one search tree per decision and returns the best root action."""

    def __init__(
        self,
        params: SearchParams,
        spec: PlantSpec,
        mpc_params: Optional[MpcParams] = None,
        action_filter: Optional[ActionFilter] = None,
    ):
        """Initialize planner.

        Args:
            params: Search hyperparameters
            spec: Plant constants the planner models the world with
            mpc_params: MPC used for proposals and rollouts
            action_filter: Optional bounding hook
        """
        self.params = params
        self.spec = spec
        self.mpc_params = mpc_params or MpcParams(horizon=params.depth)
        self.action_filter = action_filter
        self.last_tree: Optional[SearchTree] = None
        self.stats: Dict[str, int] = {"plans": 0, "empty_roots": 0, "filter_failures": 0}

    @property
    def qmdp(self) -> bool:
        return self.params.mode is SearchMode.QMDP_TS

    def plan(self, b: BeliefState, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
        """Grow the tree up to the node budget and pick the root action.

        Returns:
            Tuple of (control, ok); ok is False when no root action exists
        """
        tree = SearchTree(root=BeliefNode(belief=b), budget=self.params.node_budget)
        self.last_tree = tree
        self.stats["plans"] += 1

        max_iterations = MAX_ITERATIONS_PER_NODE * self.params.node_budget
        while tree.can_grow() and tree.stats["iterations"] < max_iterations:
            self.simulate(tree, tree.root, self.params.depth, rng)
            tree.stats["iterations"] += 1
        if tree.can_grow():
            logger.warning(
                f"Search stopped after {max_iterations} iterations with "
                f"{tree.n_nodes}/{tree.budget} nodes"
            )

        self.stats["filter_failures"] += tree.stats["filter_failures"]
        if not tree.root.children:
            logger.warning(f"No root action expanded (budget {self.params.node_budget})")
            self.stats["empty_roots"] += 1
            return np.zeros(CONTROL_DIM), False

        # Highest Q, then most visits, then first created
        best = max(
            enumerate(tree.root.children), key=lambda item: (item[1].q, item[1].n, -item[0])
        )[1]
        return best.u.copy(), True

    # ==================== Tree mechanics ====================

    def _choose_action(
        self, tree: SearchTree, node: BeliefNode, rng: np.random.Generator
    ) -> Optional[ActionNode]:
        cap = dpw_cap(self.params.k_action, node.n, self.params.dpw_exponent)
        if len(node.children) < cap and tree.can_grow():
            u, within = propose_action(
                node.belief,
                self.spec,
                rng,
                self.action_filter,
                self.params.epsilon_mpc,
                self.mpc_params,
            )
            tree.add_action(node, u, within)
        if not node.children:
            return None
        return ucb_select(node, self.params.explore_c)

    def _penalty(self, tree: SearchTree) -> float:
        return 10.0 * min(tree.worst_rollout, -1.0)

    def _transition(
        self, tree: SearchTree, node: BeliefNode, u: np.ndarray, rng: np.random.Generator
    ) -> Optional[BeliefNode]:
        """New (unattached) child of node under u, or None on filter failure."""
        if node.mean_only:
            nxt, r = mean_propagate(node.belief.mean, u, self.spec)
            zero_cov = np.zeros_like(node.belief.cov)
            return BeliefNode(belief=Gaussian(nxt, zero_cov), reward=r, mean_only=True)
        try:
            belief, r = generative(node.belief, u, self.spec, rng)
        except FilterFailure as e:
            logger.debug(f"Imagined filter update failed: {e}")
            tree.stats["filter_failures"] += 1
            return None
        if self.qmdp:
            belief = Gaussian(belief.mean, np.zeros_like(belief.cov))
        return BeliefNode(belief=belief, reward=r, mean_only=self.qmdp)

    def simulate(
        self, tree: SearchTree, node: BeliefNode, depth: int, rng: np.random.Generator
    ) -> float:
        """One selection/expansion/rollout/backup pass from node.

        Returns:
            Discounted return backed up through node
        """
        if depth <= 0:
            return 0.0

        action = self._choose_action(tree, node, rng)
        if action is None:
            # Budget full at an unexpanded node: leaf estimate only
            return tree.record_leaf(
                rollout(node.belief, depth, self.spec, self.mpc_params, self.params.discount)
            )

        gamma = self.params.discount
        if node.mean_only:
            cap = 1
        else:
            cap = dpw_cap(self.params.k_state, action.n, self.params.dpw_exponent)

        if len(action.children) < cap and tree.can_grow():
            child = self._transition(tree, node, action.u, rng)
            if child is None:
                value = self._penalty(tree)
            else:
                tree.add_belief(action, child)
                value = tree.record_leaf(
                    child.reward
                    + gamma * rollout(child.belief, depth - 1, self.spec, self.mpc_params, gamma)
                )
        elif action.children:
            index = 0 if len(action.children) == 1 else int(rng.integers(len(action.children)))
            child = action.children[index]
            value = child.reward + gamma * self.simulate(tree, child, depth - 1, rng)
        else:
            # Budget exhausted before this action got a child: evaluate without storing
            tree.stats["transient_leaves"] += 1
            child = self._transition(tree, node, action.u, rng)
            if child is None:
                value = self._penalty(tree)
            else:
                value = tree.record_leaf(
                    child.reward
                    + gamma * rollout(child.belief, depth - 1, self.spec, self.mpc_params, gamma)
                )

        node.n += 1
        action.n += 1
        action.return_sum += value
        action.q += (value - action.q) / action.n
        return value


def plan(
    b: BeliefState,
    params: SearchParams,
    spec: PlantSpec,
    rng: np.random.Generator,
    mpc_params: Optional[MpcParams] = None,
    action_filter: Optional[ActionFilter] = None,
) -> np.ndarray:
    """Convenience wrapper: build a planner and return its root action."""
    control, _ = TreeSearchPlanner(params, spec, mpc_params, action_filter).plan(b, rng)
    return control


class TreeSearchPolicy(BasePolicy):
    """Closed-loop policy that replans with a fresh tree at every step."""

    def __init__(
        self,
        params: SearchParams,
        spec: PlantSpec,
        mpc_params: Optional[MpcParams] = None,
        action_filter: Optional[ActionFilter] = None,
    ):
        """Initialize tree-search policy.

        Args:
            params: Search hyperparameters (mode selects MCTS or QMDP-TS)
            spec: Plant constants
            mpc_params: MPC used inside the planner
            action_filter: Optional bounding hook
        """
        super().__init__(spec)
        self.planner = TreeSearchPlanner(params, spec, mpc_params, action_filter)
        self.name = params.mode.value

    def act(
        self, belief: BeliefState, xi_true: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        self.stats["decisions"] += 1
        control, ok = self.planner.plan(belief, rng)
        if not ok:
            self.stats["fallbacks"] += 1
        return control

    def get_stats(self) -> Dict[str, Any]:
        """Get policy and planner counters."""
        stats: Dict[str, Any] = {**self.stats, "planner": dict(self.planner.stats)}
        action_filter = self.planner.action_filter
        if action_filter is not None and hasattr(action_filter, "get_stats"):
            stats["bounding"] = action_filter.get_stats()
        return stats
