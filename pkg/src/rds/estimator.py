"""scikit-learn style front end for the reinforced sampler."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import metrics as M
from . import policy as P
from .dataset import standardize
from .engine import RunConfig, run_rds
from .learners import LearnerSpec
from .validation import (as_dataset, check_nonnegative, check_positive_int,
                         check_ratio)


class ReinforcedSampler(BaseEstimator):
    """Learn a train/test split of ``(X, y)`` by policy gradient.

    After ``fit``, ``train_mask_`` holds the decoded split. The estimator
    also acts as a single-fold CV splitter: ``split`` yields one
    ``(train_index, test_index)`` pair, so it can be passed as ``cv=`` to
    ``cross_val_score`` and friends.

    Parameters mirror :class:`rds.engine.RunConfig`. ``learners`` is a
    sequence of learner kinds or :class:`LearnerSpec`; ``metric`` defaults
    to AUC, micro-F1 or R^2 according to the task.
    """

    def __init__(self, learners=("logistic", "tree", "mlp"), metric=None,
                 mechanism="det", ratio=0.75, episodes=150, alpha=1.0, gamma=0.9,
                 psi=0.1, hidden_size=32, learning_rate=1e-3,
                 baseline_subtraction=False, decode="constrained", task=None,
                 random_state=0, n_jobs=1):
        self.learners = learners
        self.metric = metric
        self.mechanism = mechanism
        self.ratio = ratio
        self.episodes = episodes
        self.alpha = alpha
        self.gamma = gamma
        self.psi = psi
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.baseline_subtraction = baseline_subtraction
        self.decode = decode
        self.task = task
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self, task) -> RunConfig:
        specs = [s if isinstance(s, LearnerSpec) else LearnerSpec(s) for s in self.learners]
        return RunConfig(
            learners=specs,
            metric=self.metric or M.default_metric(task),
            mechanism=self.mechanism,
            r=check_ratio(self.ratio),
            episodes=check_positive_int(self.episodes, "episodes"),
            alpha=check_nonnegative(self.alpha, "alpha"),
            gamma=check_nonnegative(self.gamma, "gamma"),
            psi=check_nonnegative(self.psi, "psi"),
            hidden_size=check_positive_int(self.hidden_size, "hidden_size"),
            lr=check_nonnegative(self.learning_rate, "learning_rate"),
            seed=int(self.random_state or 0),
            baseline_subtraction=bool(self.baseline_subtraction),
            decode=self.decode,
            n_jobs=check_positive_int(self.n_jobs, "n_jobs"),
        )

    def fit(self, X, y):
        dataset, encoder = as_dataset(X, y, self.task)
        config = self._config(dataset.task)
        result = run_rds(dataset, config)
        self.task_ = dataset.task
        self.classes_ = encoder.classes_ if encoder is not None else None
        self.config_ = config
        self.policy_ = result.policy
        self.train_mask_ = result.split.actions
        self.episode_logs_ = result.logs
        self.decoded_by_ = result.decoded_by
        self.n_features_in_ = dataset.n_features
        return self

    def fit_predict(self, X, y):
        """Fit and return the boolean Train mask."""
        return self.fit(X, y).train_mask_.copy()

    @property
    def achieved_ratio_(self) -> float:
        check_is_fitted(self, "train_mask_")
        return float(self.train_mask_.mean())

    def get_n_splits(self, X=None, y=None, groups=None) -> int:
        return 1

    def split(self, X=None, y=None, groups=None):
        """Yield the learned ``(train_index, test_index)`` once."""
        check_is_fitted(self, "train_mask_")
        if X is not None and len(X) != self.train_mask_.size:
            raise ValueError(f"X has {len(X)} rows, the fitted split covers "
                             f"{self.train_mask_.size}")
        yield np.flatnonzero(self.train_mask_), np.flatnonzero(~self.train_mask_)

    def sample(self, X, y):
        """Decode a split of new data with the fitted policy (boolean Train mask)."""
        check_is_fitted(self, "policy_")
        dataset, _ = as_dataset(X, y, self.task_)
        if dataset.n_features != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, "
                             f"got {dataset.n_features}")
        scaled, _ = standardize(dataset)
        if self.decode == "greedy":
            return P.greedy_decode(self.policy_, scaled)
        return P.constrained_decode(self.policy_, scaled, self.config_.r)
