"""CSV emission and parsing for trial records, sweeps, the bounding study and tuning."""

import csv
import io
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

from loguru import logger

from ..cross_entropy import HISTORY_COLUMNS, CeIteration
from ..harness import TRIAL_COLUMNS, BoundingRow, SweepPoint, TrialRecord

SWEEP_COLUMNS = ("policy", "axis", "value", "mean_reward", "sem", "trials", "oob_frac")
BOUNDING_COLUMNS = tuple(f.name for f in fields(BoundingRow))


def to_csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render a header row plus data rows; floats keep their repr."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_text(path: str | Path, text: str) -> Path:
    """Write text, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def read_rows(path: str | Path) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


# ==================== Trial records ====================


def trial_csv(record: TrialRecord) -> str:
    return to_csv_text(TRIAL_COLUMNS, record.to_rows())


def write_trial_csv(path: str | Path, record: TrialRecord) -> Path:
    return write_text(path, trial_csv(record))


# ==================== Sweeps ====================


def sweep_rows(points: Sequence[SweepPoint]) -> List[List[Any]]:
    return [[getattr(p, column) for column in SWEEP_COLUMNS] for p in points]


def write_sweep_csv(path: str | Path, points: Sequence[SweepPoint]) -> Path:
    """One row per (policy, sweep value); an empty table gives a header-only file."""
    return write_text(path, to_csv_text(SWEEP_COLUMNS, sweep_rows(points)))


def read_sweep_csv(path: str | Path) -> List[SweepPoint]:
    """Parse a sweep CSV back into SweepPoints (divergence counts are not stored)."""
    return [
        SweepPoint(
            policy=row["policy"],
            axis=row["axis"],
            value=float(row["value"]),
            mean_reward=float(row["mean_reward"]),
            sem=float(row["sem"]),
            trials=int(row["trials"]),
            oob_frac=float(row["oob_frac"]),
        )
        for row in read_rows(path)
    ]


# ==================== Bounding study ====================


def write_bounding_csv(path: str | Path, rows: Sequence[BoundingRow]) -> Path:
    data = [[getattr(r, column) for column in BOUNDING_COLUMNS] for r in rows]
    return write_text(path, to_csv_text(BOUNDING_COLUMNS, data))


def read_bounding_csv(path: str | Path) -> List[BoundingRow]:
    return [BoundingRow(**{k: float(v) for k, v in row.items()}) for row in read_rows(path)]


# ==================== Tuning history ====================


def write_history_csv(path: str | Path, history: Sequence[CeIteration]) -> Path:
    data = [[getattr(h, column) for column in HISTORY_COLUMNS] for h in history]
    return write_text(path, to_csv_text(HISTORY_COLUMNS, data))


def read_history_csv(path: str | Path) -> List[CeIteration]:
    return [
        CeIteration(
            iteration=int(row["iteration"]),
            best=float(row["best"]),
            mean=float(row["mean"]),
            eig_max=float(row["eig_max"]),
        )
        for row in read_rows(path)
    ]
