"""SVG charts: sweep error bars, single-trial paths and parameter-error profiles."""

from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402

from ..harness import SweepPoint, TrialRecord  # noqa: E402
from ..plant import P_X, P_Y  # noqa: E402

AXIS_LABELS = {
    "noise": "Process noise variance",
    "floor": "Parameter lower bound",
}

# Fixed so repeated runs write identical files
matplotlib.rcParams["svg.hashsalt"] = "dual-control"


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def _by_policy(points: Sequence[SweepPoint]) -> Dict[str, List[SweepPoint]]:
    grouped: Dict[str, List[SweepPoint]] = defaultdict(list)
    for point in points:
        grouped[point.policy].append(point)
    return {name: sorted(group, key=lambda p: p.value) for name, group in grouped.items()}


def plot_sweep(path: str | Path, points: Sequence[SweepPoint]) -> Path:
    """Mean total reward per policy against the sweep value, with SEM error bars."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, group in _by_policy(points).items():
        ax.errorbar(
            [p.value for p in group],
            [p.mean_reward for p in group],
            yerr=[p.sem for p in group],
            marker="o",
            capsize=3,
            label=name,
        )

    axis = points[0].axis if points else "noise"
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("Total reward")
    ax.grid(alpha=0.3)
    if points:
        ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectory(path: str | Path, record: TrialRecord) -> Path:
    """True and estimated planar path of one trial."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot(record.xi[:, P_X], record.xi[:, P_Y], marker=".", label="true")
    ax.plot(
        record.belief_mean[:, P_X],
        record.belief_mean[:, P_Y],
        linestyle="--",
        label="estimate",
    )
    ax.scatter([0.0], [0.0], marker="x", color="black", label="origin")
    ax.set_xlabel("p_x")
    ax.set_ylabel("p_y")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(f"{record.policy}, total reward {record.total_reward:.1f}")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_param_error(path: str | Path, points: Sequence[SweepPoint]) -> Path:
    """Per-step mean absolute parameter error averaged over trials, one line per cell."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for point in points:
        if point.mae_profile is None:
            continue
        steps = np.arange(1, point.mae_profile.shape[0] + 1)
        ax.plot(steps, point.mae_profile, label=f"{point.policy} {point.axis}={point.value:g}")
    ax.set_xlabel("Step")
    ax.set_ylabel("Parameter MAE")
    ax.grid(alpha=0.3)
    if ax.lines:
        ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)
