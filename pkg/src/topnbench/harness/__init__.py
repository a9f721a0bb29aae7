"""Experiment orchestration: configuration, presets, tuning, runs, Borda count and reports."""
from __future__ import annotations

from .borda import BordaError, LeaderboardEntry, borda_count, load_tables_csv, max_points
from .config import AlgorithmSpec, DatasetSpec, ExperimentConfig
from .experiment import TuneResult, TuningError, run_experiment, run_folds, tune
from .presets import PRESETS, SEARCH_SPACES, Param, SearchSpace, default_trials, preset, preset_violations
from .report import emit_report

__all__ = [
    "AlgorithmSpec", "BordaError", "DatasetSpec", "ExperimentConfig", "LeaderboardEntry", "PRESETS", "Param",
    "SEARCH_SPACES", "SearchSpace", "TuneResult", "TuningError", "borda_count", "default_trials", "emit_report",
    "load_tables_csv", "max_points", "preset", "preset_violations", "run_experiment", "run_folds", "tune",
]
