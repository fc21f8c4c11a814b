"""Task metrics and the ensemble reward mechanisms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import TaskKind

AUC = "auc"
MICRO_F1 = "micro_f1"
R_SQUARED = "r2"

DETERMINISTIC = "det"
STOCHASTIC = "sto"


class MetricError(ValueError):
    pass


def auc(labels, scores) -> float:
    """Area under the ROC curve as the Mann-Whitney U statistic.

    Ties between a positive and a negative score earn half credit.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise MetricError("labels and scores differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    # midranks give ties 0.5 credit
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def micro_f1(labels, predictions) -> float:
    """Micro-averaged F1; for single-label data this is plain accuracy."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.size == 0:
        raise MetricError("micro-F1 of an empty set")
    if labels.shape != predictions.shape:
        raise MetricError("labels and predictions differ in length")
    tp = np.sum(labels == predictions)
    # every miss is one FP (predicted class) and one FN (true class)
    fp = fn = labels.size - tp
    return float(2 * tp / (2 * tp + fp + fn))


def r_squared(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if targets.shape != predictions.shape:
        raise MetricError("targets and predictions differ in length")
    if targets.size < 2:
        raise MetricError("R^2 needs at least two targets")
    ss_tot = np.sum((targets - targets.mean()) ** 2)
    if ss_tot == 0.0:
        raise MetricError("R^2 undefined for constant targets")
    ss_res = np.sum((targets - predictions) ** 2)
    return float(1.0 - ss_res / ss_tot)


def check_metric(metric: str, task: TaskKind) -> None:
    if metric == AUC and task.kind != "binary":
        raise MetricError("AUC applies to binary classification only")
    if metric == MICRO_F1 and not task.is_classification:
        raise MetricError("micro-F1 applies to classification only")
    if metric == R_SQUARED and task.is_classification:
        raise MetricError("R^2 applies to regression only")
    if metric not in (AUC, MICRO_F1, R_SQUARED):
        raise MetricError(f"unknown metric {metric!r}")


def default_metric(task: TaskKind) -> str:
    if task.kind == "binary":
        return AUC
    return MICRO_F1 if task.is_classification else R_SQUARED


def score(metric: str, targets, predictions) -> float:
    """Apply ``metric`` to raw learner output.

    Classification predictions are probability rows; AUC uses the
    positive-class column and micro-F1 the row argmax.
    """
    predictions = np.asarray(predictions, dtype=float)
    if metric == AUC:
        return auc(targets, predictions[:, 1])
    if metric == MICRO_F1:
        return micro_f1(targets, np.argmax(predictions, axis=1))
    if metric == R_SQUARED:
        return r_squared(targets, predictions)
    raise MetricError(f"unknown metric {metric!r}")


def soft_vote(per_learner: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of K prediction sets."""
    if len(per_learner) == 0:
        raise MetricError("soft vote over zero learners")
    arrays = [np.asarray(p, dtype=float) for p in per_learner]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise MetricError("prediction sets differ in shape")
    mean = np.mean(arrays, axis=0)
    if mean.ndim == 2:
        sums = mean.sum(axis=1, keepdims=True)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            mean = mean / sums
    return mean


@dataclass(frozen=True)
class RewardMechanism:
    mode: str = DETERMINISTIC
    rho: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in (DETERMINISTIC, STOCHASTIC):
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float)
            if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-9:
                raise ValueError("rho must be a probability vector")
            object.__setattr__(self, "rho", tuple(float(v) for v in rho))

    @classmethod
    def stochastic(cls, n_learners: int, rho=None) -> "RewardMechanism":
        if rho is None:
            rho = np.full(n_learners, 1.0 / n_learners)
        if len(rho) != n_learners:
            raise ValueError("rho length must equal the number of learners")
        return cls(STOCHASTIC, tuple(rho))


def choose_learner(mechanism: RewardMechanism, rng: np.random.Generator) -> int:
    """Draw the episode's single learner index from rho."""
    if mechanism.mode != STOCHASTIC:
        raise ValueError("choose_learner is only defined for the stochastic mechanism")
    rho = np.asarray(mechanism.rho)
    return int(rng.choice(rho.size, p=rho))


def episode_return(mechanism: RewardMechanism, predictions: Sequence[np.ndarray],
                   test_targets, metric: str, chosen: Optional[int] = None) -> float:
    """Reward of one episode from per-learner test predictions.

    Deterministic mode scores the soft vote of all learners; stochastic mode
    scores only learner ``chosen``.
    """
    if mechanism.mode == DETERMINISTIC:
        return score(metric, test_targets, soft_vote(predictions))
    if chosen is None:
        raise ValueError("stochastic return needs the chosen learner index")
    return score(metric, test_targets, predictions[chosen])
