"""Tests for CSV tables and SVG charts."""

import xml.etree.ElementTree as ET

import numpy as np

from src.cross_entropy import HISTORY_COLUMNS, CeIteration
from src.harness import TRIAL_COLUMNS, BoundingRow, SweepPoint, run_trial
from src.reporting import charts, tables


def _points():
    return [
        SweepPoint("MPC", "noise", 0.01, -120.5, 3.25, 20, 0.0, mae_profile=np.array([0.5, 0.3])),
        SweepPoint("MCTS", "noise", 0.01, -98.0, 2.5, 19, 0.01, aborted=1),
        SweepPoint("MPC", "noise", 0.02, -150.0, 4.0, 20, 0.02, mae_profile=np.array([0.6, 0.4])),
    ]


def _is_svg(path):
    root = ET.parse(path).getroot()
    return root.tag.endswith("svg")


def test_empty_sweep_writes_header_only(tmp_path):
    path = tables.write_sweep_csv(tmp_path / "sweep.csv", [])
    assert path.read_text(encoding="utf-8") == ",".join(tables.SWEEP_COLUMNS) + "\n"


def test_sweep_csv_round_trip(tmp_path):
    path = tables.write_sweep_csv(tmp_path / "out" / "sweep.csv", _points())
    parsed = tables.read_sweep_csv(path)
    assert tables.sweep_rows(parsed) == tables.sweep_rows(_points())
    assert parsed[1].aborted == 0


def test_bounding_csv_round_trip(tmp_path):
    rows = [BoundingRow(6.0, 12.5, 1.25, -210.0, 8.5, -190.0)]
    path = tables.write_bounding_csv(tmp_path / "bounding.csv", rows)
    assert tables.read_bounding_csv(path) == rows
    assert path.read_text(encoding="utf-8").splitlines()[0].split(",") == list(
        tables.BOUNDING_COLUMNS
    )


def test_history_csv_round_trip(tmp_path):
    history = [CeIteration(1, -50.0, -80.5, 40.0), CeIteration(2, -45.0, -60.0, 2.5)]
    path = tables.write_history_csv(tmp_path / "tuning.csv", history)
    assert tables.read_history_csv(path) == history
    assert path.read_text(encoding="utf-8").startswith(",".join(HISTORY_COLUMNS))


def test_trial_csv_has_one_row_per_step(quick_config):
    record = run_trial(quick_config, 3)
    lines = tables.trial_csv(record).splitlines()
    assert lines[0].split(",") == TRIAL_COLUMNS
    assert len(lines) == record.length + 1
    assert all(len(line.split(",")) == len(TRIAL_COLUMNS) for line in lines)


def test_charts_are_valid_svg(tmp_path, quick_config):
    record = run_trial(quick_config, 3)
    assert _is_svg(charts.plot_trajectory(tmp_path / "trial.svg", record))
    assert _is_svg(charts.plot_sweep(tmp_path / "sweep.svg", _points()))
    assert _is_svg(charts.plot_param_error(tmp_path / "mae.svg", _points()))


def test_empty_charts_still_render(tmp_path):
    assert _is_svg(charts.plot_sweep(tmp_path / "sweep.svg", []))
    assert _is_svg(charts.plot_param_error(tmp_path / "mae.svg", []))


def test_charts_are_reproducible(tmp_path):
    a = charts.plot_sweep(tmp_path / "a.svg", _points()).read_bytes()
    b = charts.plot_sweep(tmp_path / "b.svg", _points()).read_bytes()
    assert a == b
