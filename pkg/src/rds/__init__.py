"""Reinforced train/test splitting with an ensemble-driven sampling policy."""
from .dataset import DataError, Dataset, TaskKind, load_csv, standardize
from .engine import (EpisodeLog, Evaluation, RunAborted, RunConfig, RunResult,
                     SplitAssignment, baseline_random, baseline_stratified,
                     evaluate_split, run_rds)
from .estimator import ReinforcedSampler
from .learners import LearnerSpec

__all__ = [
    "DataError", "Dataset", "TaskKind", "load_csv", "standardize",
    "EpisodeLog", "Evaluation", "RunAborted", "RunConfig", "RunResult",
    "SplitAssignment", "baseline_random", "baseline_stratified",
    "evaluate_split", "run_rds", "ReinforcedSampler", "LearnerSpec",
]
__version__ = "0.1.0"
