"""Deterministic replay: re-run a trial seed and compare record digests."""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from loguru import logger

from .config import ExperimentConfig
from .harness import run_trial
from .reporting.tables import trial_csv

MAX_REPORTED_DIFFERENCES = 5


def record_digest(text: str) -> str:
    """SHA256 of a record's CSV text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def diff_lines(expected: str, actual: str) -> List[Tuple[int, str, str]]:
    """Line-level differences as (line number, expected, actual)."""
    left, right = expected.splitlines(), actual.splitlines()
    differences = []
    for lineno in range(max(len(left), len(right))):
        a = left[lineno] if lineno < len(left) else "<missing>"
        b = right[lineno] if lineno < len(right) else "<missing>"
        if a != b:
            differences.append((lineno + 1, a, b))
    return differences


@dataclass
class ReplayResult:
    """Outcome of one replay comparison."""

    seed: int
    expected_digest: str
    actual_digest: str
    differences: List[Tuple[int, str, str]] = field(default_factory=list)

    @property
    def matches(self) -> bool:
        return self.expected_digest == self.actual_digest


class ReplayChecker:
    """Re-runs trials and checks their CSV output is byte-identical."""

    def __init__(self, cfg: ExperimentConfig):
        """Initialize replay checker.

        Args:
            cfg: Experiment configuration the trials were run with
        """
        self.cfg = cfg
        self.stats: Dict[str, int] = {"checks": 0, "matches": 0, "mismatches": 0}

    def render(self, seed: int) -> str:
        """Run the trial and return its CSV text."""
        return trial_csv(run_trial(self.cfg, seed))

    def check(self, seed: int, reference: Optional[str | Path] = None) -> ReplayResult:
        """Compare a fresh run against a reference CSV (or against a second run).

        Args:
            seed: Trial seed
            reference: Path to a previously written trial CSV

        Returns:
            ReplayResult with the first few differing lines on mismatch
        """
        self.stats["checks"] += 1
        if reference is not None:
            expected = Path(reference).read_text(encoding="utf-8")
        else:
            expected = self.render(seed)
        actual = self.render(seed)

        result = ReplayResult(
            seed=seed,
            expected_digest=record_digest(expected),
            actual_digest=record_digest(actual),
        )
        if result.matches:
            self.stats["matches"] += 1
            logger.info(f"Replay of seed {seed} matches (hash: {result.actual_digest[:8]}...)")
        else:
            self.stats["mismatches"] += 1
            result.differences = diff_lines(expected, actual)[:MAX_REPORTED_DIFFERENCES]
            logger.warning(
                f"Replay of seed {seed} differs: {result.expected_digest[:8]}... vs "
                f"{result.actual_digest[:8]}..."
            )
            for lineno, a, b in result.differences:
                logger.warning(f"  line {lineno}: {a!r} != {b!r}")
        return result

    def get_stats(self) -> Dict[str, Any]:
        """Get replay statistics."""
        return dict(self.stats)
