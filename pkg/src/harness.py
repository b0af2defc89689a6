"""Closed-loop simulation, trial seeding, sweeps and the bounding study."""

import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from .bounding import BoundingFilter
from .config import (
    BoundingParams,
    ExperimentConfig,
    MpcVariant,
    PlantSpec,
    Policy,
    SearchMode,
)
from .gaussian import Gaussian
from .plant import (
    HYPER_DIM,
    PARAM_DIM,
    PARAMS,
    STATE,
    STATE_DIM,
    clamp_params,
    clip_control,
    observe,
    reward,
    step_truth,
)
from .policies.base import BasePolicy
from .policies.mpc import MpcPolicy, cautious_inflation_hook
from .policies.tree_search import TreeSearchPolicy
from .ukf import BeliefState, FilterFailure, divergence_check, filter_step

INIT_MEAN = 1.0
INIT_VAR = 0.5
INIT_STATE_VAR = 1e-4

TRIAL_COLUMNS = (
    ["step"]
    + [f"xi_{i}" for i in range(HYPER_DIM)]
    + [f"b_mean_{i}" for i in range(HYPER_DIM)]
    + ["cov_trace", "u_x", "u_y", "u_t", "reward", "state_norm", "param_mae", "diverged"]
)


# ==================== Records ====================


@dataclass
class TrialRecord:
    """Everything logged during one closed-loop trial.

    Per-step arrays hold the truth and belief at the start of the step, the
    applied control and reward, and the state norm and parameter error after
    the step.
    """

    policy: str
    seed: int
    steps: int
    xi: np.ndarray
    belief_mean: np.ndarray
    cov_trace: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    state_norms: np.ndarray
    param_mae: np.ndarray
    diverged_steps: np.ndarray
    out_of_bound: int = 0
    aborted: bool = False

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def diverged(self) -> bool:
        return bool(np.any(self.diverged_steps))

    @property
    def length(self) -> int:
        return int(self.rewards.shape[0])

    def count_outside(self, bound: float) -> int:
        """Steps whose next-state norm exceeds bound."""
        return int(np.sum(self.state_norms > bound))

    def to_rows(self) -> List[List[Any]]:
        """Rows matching TRIAL_COLUMNS."""
        rows = []
        for t in range(self.length):
            rows.append(
                [t]
                + self.xi[t].tolist()
                + self.belief_mean[t].tolist()
                + [float(self.cov_trace[t])]
                + self.actions[t].tolist()
                + [
                    float(self.rewards[t]),
                    float(self.state_norms[t]),
                    float(self.param_mae[t]),
                    int(self.diverged_steps[t]),
                ]
            )
        return rows


@dataclass
class SweepPoint:
    """Aggregate of one (policy, sweep value) cell."""

    policy: str
    axis: str
    value: float
    mean_reward: float
    sem: float
    trials: int
    oob_frac: float
    diverged: int = 0
    aborted: int = 0
    mae_profile: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass
class BoundingRow:
    """One bound of the bounding study; percentages are of all completed steps."""

    bound: float
    pct_outside_plain: float
    pct_outside_heuristic: float
    mean_reward_heuristic: float
    sem_heuristic: float
    mean_reward_plain: float


# ==================== Trial setup ====================


def trial_seed(seed: int, index: int) -> int:
    """Per-trial seed: base seed xor a hash of the trial index."""
    digest = hashlib.sha256(str(index).encode()).digest()
    return (seed ^ int.from_bytes(digest[:8], "little")) & 0xFFFFFFFFFFFFFFFF


def trial_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment, policy) generators for one trial."""
    env_seq, policy_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(policy_seq)


def init_trial(spec: PlantSpec, rng: np.random.Generator) -> Tuple[np.ndarray, BeliefState]:
    """Draw the initial hyperstate and build the prior belief.

    Every component is drawn from N(1, 0.5); the belief knows the physical
    state almost exactly and holds the prior on the parameters.
    """
    xi = rng.normal(INIT_MEAN, np.sqrt(INIT_VAR), HYPER_DIM)
    xi = clamp_params(xi, spec.param_floor)

    mean = np.concatenate([xi[STATE], np.full(PARAM_DIM, INIT_MEAN)])
    cov = np.diag(
        np.concatenate([np.full(STATE_DIM, INIT_STATE_VAR), np.full(PARAM_DIM, INIT_VAR)])
    )
    return xi, Gaussian(mean=mean, cov=cov)


def filter_spec_for(cfg: ExperimentConfig) -> PlantSpec:
    """Plant constants the closed-loop filter runs with."""
    if cfg.policy is Policy.MPC_CAUTIOUS:
        return cautious_inflation_hook(cfg.spec, cfg.mpc.cautious_inflation)
    return cfg.spec


def make_policy(cfg: ExperimentConfig) -> BasePolicy:
    """Instantiate the configured policy.

    Raises:
        ValueError: If the policy is unknown
    """
    if cfg.policy in (Policy.MCTS, Policy.QMDP_TS):
        mode = SearchMode.MCTS if cfg.policy is Policy.MCTS else SearchMode.QMDP_TS
        search = cfg.search.model_copy(update={"mode": mode})
        bounding = cfg.bounding if cfg.bounding is not None else search.bounding
        action_filter = BoundingFilter(bounding, cfg.spec) if bounding is not None else None
        mpc = cfg.mpc.model_copy(update={"variant": MpcVariant.STANDARD})
        return TreeSearchPolicy(search, cfg.spec, mpc, action_filter)

    variants = {
        Policy.MPC: MpcVariant.STANDARD,
        Policy.MPC_CAUTIOUS: MpcVariant.CAUTIOUS,
        Policy.MPC_ORACLE: MpcVariant.ORACLE,
    }
    if cfg.policy not in variants:
        raise ValueError(f"Unknown policy: {cfg.policy}")
    return MpcPolicy(cfg.mpc.model_copy(update={"variant": variants[cfg.policy]}), cfg.spec)


# ==================== Closed loop ====================


def run_trial(
    cfg: ExperimentConfig,
    seed: int,
    initial: Optional[Tuple[np.ndarray, BeliefState]] = None,
) -> TrialRecord:
    """Run the estimate-and-control loop for cfg.steps steps.

    Args:
        cfg: Experiment configuration
        seed: Trial seed (see trial_seed)
        initial: Optional (hyperstate, belief) replacing init_trial

    Returns:
        TrialRecord; on a filter failure the record is partial and aborted
    """
    spec = cfg.spec
    env_rng, policy_rng = trial_streams(seed)
    xi, belief = init_trial(spec, env_rng)
    if initial is not None:
        xi, belief = np.asarray(initial[0], dtype=float), initial[1]

    policy = make_policy(cfg)
    filter_spec = filter_spec_for(cfg)
    steps = cfg.steps

    xis = np.zeros((steps, HYPER_DIM))
    means = np.zeros((steps, HYPER_DIM))
    traces = np.zeros(steps)
    actions = np.zeros((steps, 3))
    rewards = np.zeros(steps)
    norms = np.zeros(steps)
    mae = np.zeros(steps)
    diverged = np.zeros(steps, dtype=bool)

    aborted = False
    done = 0
    for t in range(steps):
        xis[t], means[t], traces[t] = xi, belief.mean, np.trace(belief.cov)

        u = clip_control(policy.act(belief, xi, policy_rng), spec)
        actions[t] = u
        rewards[t] = reward(xi[STATE], u, spec)

        xi = step_truth(xi, u, spec, env_rng)
        o = observe(xi, u, spec, env_rng)
        norms[t] = np.linalg.norm(xi[STATE])

        try:
            belief = filter_step(belief, u, o, filter_spec)
        except FilterFailure as e:
            logger.error(f"Trial {seed} aborted at step {t}: {e}")
            aborted = True
            done = t + 1
            mae[t] = np.nan
            break

        mae[t] = np.mean(np.abs(belief.mean[PARAMS] - xi[PARAMS]))
        diverged[t] = divergence_check(belief, xi)
        done = t + 1
        logger.debug(f"Trial {seed} step {t}: reward {rewards[t]:.3f}, |x| {norms[t]:.3f}")

    record = TrialRecord(
        policy=cfg.policy.value,
        seed=seed,
        steps=steps,
        xi=xis[:done],
        belief_mean=means[:done],
        cov_trace=traces[:done],
        actions=actions[:done],
        rewards=rewards[:done],
        state_norms=norms[:done],
        param_mae=mae[:done],
        diverged_steps=diverged[:done],
        aborted=aborted,
    )
    record.out_of_bound = record.count_outside(cfg.state_bound)
    return record


def run_trials(cfg: ExperimentConfig, n_jobs: int = 1) -> List[TrialRecord]:
    """Run cfg.trials independent trials on the shared seed schedule."""
    seeds = [trial_seed(cfg.seed, i) for i in range(cfg.trials)]
    return Parallel(n_jobs=n_jobs)(delayed(run_trial)(cfg, s) for s in seeds)


# ==================== Aggregation ====================


def mean_and_sem(values: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and standard error (ddof=1; 0 for a single value)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def summarize(
    records: Sequence[TrialRecord], policy: str, axis: str, value: float, bound: float
) -> SweepPoint:
    """Aggregate completed trials; aborted ones are counted and excluded."""
    completed = [r for r in records if not r.aborted]
    mean, sem = mean_and_sem([r.total_reward for r in completed])
    total_steps = sum(r.length for r in completed)
    outside = sum(r.count_outside(bound) for r in completed)

    profile = None
    if completed:
        profile = np.mean(np.stack([r.param_mae for r in completed]), axis=0)

    return SweepPoint(
        policy=policy,
        axis=axis,
        value=float(value),
        mean_reward=mean,
        sem=sem,
        trials=len(completed),
        oob_frac=outside / total_steps if total_steps else 0.0,
        diverged=sum(r.diverged for r in completed),
        aborted=len(records) - len(completed),
        mae_profile=profile,
    )


def with_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of cfg with the swept plant constant replaced.

    Raises:
        ValueError: If axis is not "noise" or "floor"
    """
    fields = {"noise": "process_var", "floor": "param_floor"}
    if axis not in fields:
        raise ValueError(f"Unknown sweep axis: {axis}")
    spec = PlantSpec.model_validate({**cfg.spec.model_dump(), fields[axis]: value})
    return cfg.model_copy(update={"spec": spec})


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: Optional[Sequence[float]] = None,
    policies: Optional[Sequence[Policy]] = None,
    n_jobs: int = 1,
) -> List[SweepPoint]:
    """Run every policy at every sweep value on common random numbers.

    Args:
        cfg: Base experiment
        axis: "noise" (process variance) or "floor" (parameter floor)
        values: Sweep values; defaults to the config's list for the axis
        policies: Policies to compare; defaults to cfg.policy
        n_jobs: joblib workers for trials

    Returns:
        One SweepPoint per (value, policy)
    """
    if values is None:
        values = cfg.noise_values if axis == "noise" else cfg.floor_values
    policies = list(policies) if policies else [cfg.policy]

    points: List[SweepPoint] = []
    for value in values:
        point_cfg = with_axis(cfg, axis, value)
        for policy in policies:
            policy_cfg = point_cfg.model_copy(update={"policy": policy})
            records = run_trials(policy_cfg, n_jobs)
            point = summarize(records, policy.value, axis, value, cfg.state_bound)
            points.append(point)
            logger.info(
                f"{axis}={value:g} {policy.value}: {point.mean_reward:.1f} ± {point.sem:.1f} "
                f"({point.trials} trials, {point.diverged} diverged, {point.aborted} aborted)"
            )
    return points


# ==================== Bounding study ====================


def bounding_conditions(cfg: ExperimentConfig) -> ExperimentConfig:
    """The study's fixed conditions: σ²_w 0.01, ℓ 0.1, node budget 300, MCTS."""
    spec = PlantSpec.model_validate(
        {**cfg.spec.model_dump(), "process_var": 0.01, "param_floor": 0.1}
    )
    search = cfg.search.model_copy(update={"node_budget": 300})
    return cfg.model_copy(update={"spec": spec, "search": search, "policy": Policy.MCTS})


def _outside_pct(records: Sequence[TrialRecord], bound: float) -> float:
    completed = [r for r in records if not r.aborted]
    total = sum(r.length for r in completed)
    return 100.0 * sum(r.count_outside(bound) for r in completed) / total if total else 0.0


def bounding_study(
    cfg: ExperimentConfig, bounds: Optional[Sequence[float]] = None, n_jobs: int = 1
) -> List[BoundingRow]:
    """Compare plain MCTS with MCTS under the bounding filter at each bound."""
    bounds = list(bounds) if bounds is not None else list(cfg.bounds)
    params = cfg.bounding or cfg.search.bounding or BoundingParams()

    plain_cfg = cfg.model_copy(
        update={
            "policy": Policy.MCTS,
            "bounding": None,
            "search": cfg.search.model_copy(update={"bounding": None}),
        }
    )
    plain = run_trials(plain_cfg, n_jobs)
    plain_mean, _ = mean_and_sem([r.total_reward for r in plain if not r.aborted])

    rows: List[BoundingRow] = []
    for bound in bounds:
        heuristic_cfg = plain_cfg.model_copy(
            update={"bounding": params.model_copy(update={"beta_des": bound}), "state_bound": bound}
        )
        heuristic = run_trials(heuristic_cfg, n_jobs)
        mean, sem = mean_and_sem([r.total_reward for r in heuristic if not r.aborted])
        row = BoundingRow(
            bound=float(bound),
            pct_outside_plain=_outside_pct(plain, bound),
            pct_outside_heuristic=_outside_pct(heuristic, bound),
            mean_reward_heuristic=mean,
            sem_heuristic=sem,
            mean_reward_plain=plain_mean,
        )
        rows.append(row)
        logger.info(
            f"bound {bound:g}: outside {row.pct_outside_plain:.1f}% plain, "
            f"{row.pct_outside_heuristic:.1f}% heuristic, reward {mean:.1f}"
        )
    return rows


# ==================== Tuning objective ====================


class TuningObjective:
    """Mean total reward of seeded MCTS trials for integer (k_a, k_s, depth, c)."""

    def __init__(self, cfg: ExperimentConfig):
        """Initialize objective.

        Args:
            cfg: Base experiment; trials per sample come from cfg.ce
        """
        spec = PlantSpec.model_validate({**cfg.spec.model_dump(), "process_var": 0.01})
        self.cfg = cfg.model_copy(
            update={"spec": spec, "policy": Policy.MCTS, "trials": cfg.ce.trials_per_sample}
        )
        self.stats: Dict[str, int] = {"evaluations": 0}

    def search_config(self, params: np.ndarray) -> ExperimentConfig:
        k_action, k_state, depth, explore_c = (int(v) for v in params)
        search = self.cfg.search.model_copy(
            update={
                "k_action": float(k_action),
                "k_state": float(k_state),
                "depth": depth,
                "explore_c": float(explore_c),
            }
        )
        return self.cfg.model_copy(update={"search": search})

    def __call__(self, params: np.ndarray) -> float:
        self.stats["evaluations"] += 1
        records = run_trials(self.search_config(params))
        completed = [r.total_reward for r in records if not r.aborted]
        if not completed:
            return -np.inf
        return float(np.mean(completed))
