"""Command-line entry point for the dual-control workbench."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger
from pydantic import ValidationError

from .config import (
    PRESETS,
    ExperimentConfig,
    Policy,
    Settings,
    build_experiment,
    key_values_to_overrides,
    load_settings,
    parse_key_values,
)
from .cross_entropy import integerize, optimize
from .harness import (
    TuningObjective,
    bounding_conditions,
    bounding_study,
    run_trial,
    sweep,
    trial_seed,
)
from .replay import ReplayChecker
from .reporting import charts, tables

EXIT_OK = 0
EXIT_REPLAY_MISMATCH = 1
EXIT_CONFIG_ERROR = 2
EXIT_ABORTED = 3


def setup_logging(settings: Settings):
    """Setup logging configuration.

    Args:
        settings: Runtime settings
    """
    # Remove default handler
    logger.remove()

    # Console logging
    logger.add(
        sys.stderr,
        level=settings.log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <level>{message}</level>",
    )

    # File logging with rotation
    log_dir = Path(settings.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    logger.add(
        log_dir / "workbench_{time:YYYY-MM-DD}.log",
        level=settings.log_level,
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}",
        rotation=settings.log_rotation,
        retention=f"{settings.log_retention_days} days",
        compression="zip",
    )

    logger.info("Logging initialized")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the shared flags on every subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Base seed (64-bit)")
    common.add_argument("--trials", type=int, help="Trials per policy and sweep value")
    common.add_argument(
        "--policy",
        action="append",
        choices=[p.value for p in Policy],
        help="Policy to run; repeat to compare several in a sweep",
    )
    common.add_argument("--out", help="Output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="Parameter preset")
    common.add_argument("--config", help="Flat key = value config file")

    parser = argparse.ArgumentParser(
        prog="dual-control", description="Belief-space dual-control workbench"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", parents=[common], help="Run a single trial")
    run_cmd.add_argument("--index", type=int, default=0, help="Trial index under the seed")

    commands.add_parser("sweep-noise", parents=[common], help="Sweep the process noise")
    commands.add_parser("sweep-floor", parents=[common], help="Sweep the parameter floor")

    bounding_cmd = commands.add_parser(
        "bounding", parents=[common], help="Compare MCTS with and without the bounding filter"
    )
    bounding_cmd.add_argument("--bounds", type=float, nargs="+", help="Norm bounds to test")

    commands.add_parser("tune", parents=[common], help="Cross-entropy hyperparameter tuning")

    replay_cmd = commands.add_parser("replay", parents=[common], help="Re-run a trial and diff")
    replay_cmd.add_argument("--index", type=int, default=0, help="Trial index under the seed")
    replay_cmd.add_argument("--reference", help="Previously written trial CSV")
    return parser


def load_experiment(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    """Preset, then config file, then command-line flags.

    Raises:
        KeyError, ValueError, OSError, ValidationError: On bad configuration
    """
    overrides: Dict[str, Any] = {}
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        overrides = key_values_to_overrides(parse_key_values(text))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.policy:
        overrides["policy"] = args.policy[0]
    return build_experiment(args.preset or settings.default_preset, overrides)


def selected_policies(args: argparse.Namespace) -> List[Policy]:
    if args.policy:
        return [Policy(p) for p in args.policy]
    return list(Policy)


# ==================== Commands ====================


def cmd_run(args, cfg: ExperimentConfig, out: Path, n_jobs: int) -> int:
    seed = trial_seed(cfg.seed, args.index)
    record = run_trial(cfg, seed)
    stem = f"trial_{cfg.policy.value}_{args.index}"
    tables.write_trial_csv(out / f"{stem}.csv", record)
    if record.length:
        charts.plot_trajectory(out / f"{stem}.svg", record)
    logger.info(
        f"Trial {args.index} ({cfg.policy.value}): total reward {record.total_reward:.2f}, "
        f"{record.out_of_bound} steps out of bound, diverged={record.diverged}"
    )
    return EXIT_ABORTED if record.aborted else EXIT_OK


def cmd_sweep(args, cfg: ExperimentConfig, out: Path, n_jobs: int, axis: str) -> int:
    points = sweep(cfg, axis, policies=selected_policies(args), n_jobs=n_jobs)
    tables.write_sweep_csv(out / f"sweep_{axis}.csv", points)
    charts.plot_sweep(out / f"sweep_{axis}.svg", points)
    charts.plot_param_error(out / f"param_error_{axis}.svg", points)

    diverged = sum(p.diverged for p in points)
    aborted = sum(p.aborted for p in points)
    logger.info(f"Sweep {axis}: {diverged} diverged trials, {aborted} aborted trials")
    return EXIT_ABORTED if aborted else EXIT_OK


def cmd_bounding(args, cfg: ExperimentConfig, out: Path, n_jobs: int) -> int:
    rows = bounding_study(bounding_conditions(cfg), args.bounds, n_jobs=n_jobs)
    tables.write_bounding_csv(out / "bounding.csv", rows)
    return EXIT_OK


def cmd_tune(args, cfg: ExperimentConfig, out: Path, n_jobs: int) -> int:
    rng = np.random.default_rng(cfg.seed)
    mean, history = optimize(TuningObjective(cfg), cfg.ce, rng, n_jobs=n_jobs)
    tables.write_history_csv(out / "tuning.csv", history)
    k_action, k_state, depth, explore_c = integerize(mean).tolist()
    logger.info(
        f"Tuned: k_action={k_action}, k_state={k_state}, depth={depth}, explore_c={explore_c}"
    )
    return EXIT_OK


def cmd_replay(args, cfg: ExperimentConfig, out: Path, n_jobs: int) -> int:
    checker = ReplayChecker(cfg)
    result = checker.check(trial_seed(cfg.seed, args.index), args.reference)
    return EXIT_OK if result.matches else EXIT_REPLAY_MISMATCH


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)

    settings = load_settings()
    settings.create_directories()
    setup_logging(settings)

    try:
        cfg = load_experiment(args, settings)
    except (ValidationError, KeyError, ValueError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    out = Path(args.out or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    logger.info("=" * 60)
    logger.info(f"Command: {args.command}")
    logger.info(f"Policy: {cfg.policy.value}, trials: {cfg.trials}, seed: {cfg.seed}")
    logger.info(f"Process variance: {cfg.spec.process_var}, floor: {cfg.spec.param_floor}")
    logger.info(f"Node budget: {cfg.search.node_budget}, workers: {settings.n_jobs}")
    logger.info("=" * 60)

    commands = {
        "run": cmd_run,
        "sweep-noise": lambda *a: cmd_sweep(*a, axis="noise"),
        "sweep-floor": lambda *a: cmd_sweep(*a, axis="floor"),
        "bounding": cmd_bounding,
        "tune": cmd_tune,
        "replay": cmd_replay,
    }
    code = commands[args.command](args, cfg, out, settings.n_jobs)
    logger.info(f"Finished {args.command} with exit code {code}")
    return code


def run():
    """Entry point for the CLI."""
    sys.exit(main())


if __name__ == "__main__":
    run()
