"""Episodic training loop, classical baseline splits and split evaluation."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import learners as L
from . import metrics as M
from . import policy as P
from . import regularizers
from .dataset import Dataset, class_pmf, standardize

log = logging.getLogger(__name__)

# stream labels; a new consumer gets a new label so existing draws never shift
POLICY_INIT, TRAJECTORY, LEARNER_SEEDS, RHO, BASELINE = range(1, 6)

DECODERS = ("constrained", "greedy", "best_sampled")


def stream(master_seed: int, label: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), label]))


def stream_seed(master_seed: int, label: int, index: int = 0) -> int:
    ss = np.random.SeedSequence([int(master_seed), label, index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SplitAssignment:
    """Per-sample Train (True) / Test (False) flags in dataset order."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=bool).copy()
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @property
    def counts(self) -> tuple[int, int]:
        n_train = int(self.actions.sum())
        return n_train, int(self.actions.size - n_train)

    @property
    def achieved_ratio(self) -> float:
        return float(self.actions.mean())

    @property
    def is_valid(self) -> bool:
        n_train, n_test = self.counts
        return n_train >= 1 and n_test >= 1

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.actions)

    @property
    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.actions)

    def __eq__(self, other):
        return (isinstance(other, SplitAssignment)
                and np.array_equal(self.actions, other.actions))

    def __hash__(self):
        return hash(self.actions.tobytes())


@dataclass
class EpisodeLog:
    episode: int
    reward: float
    reward_shaped: float
    ratio: float
    loss_theta: float
    loss_ratio: float
    loss_iid: float
    learner_metrics: list
    chosen_learner: Optional[int] = None
    seconds: float = 0.0
    failed: bool = False


@dataclass
class RunConfig:
    learners: Sequence[L.LearnerSpec]
    metric: str
    mechanism: str = M.DETERMINISTIC
    rho: Optional[Sequence[float]] = None
    r: float = 0.75
    episodes: int = 150
    alpha: float = 1.0
    gamma: float = 0.9
    psi: float = 0.1
    knn_k: int = 1
    hidden_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    baseline_subtraction: bool = False
    baseline_momentum: float = 0.9
    convergence_window: int = 25
    pretrain_passes: int = 500
    decode: str = "constrained"
    n_jobs: int = 1

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if min(self.alpha, self.gamma, self.psi) < 0:
            raise ValueError("loss scales must be nonnegative")
        if not 0.0 < self.r < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if not self.learners:
            raise ValueError("at least one learner is required")
        if self.mechanism not in (M.DETERMINISTIC, M.STOCHASTIC):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.decode not in DECODERS:
            raise ValueError(f"decode must be one of {DECODERS}")
        self.learners = [s if isinstance(s, L.LearnerSpec) else L.LearnerSpec(**s)
                         for s in self.learners]

    def reward_mechanism(self) -> M.RewardMechanism:
        if self.mechanism == M.STOCHASTIC:
            return M.RewardMechanism.stochastic(len(self.learners), self.rho)
        return M.RewardMechanism(M.DETERMINISTIC)

    def seeded_learners(self) -> list:
        """Learner specs with seeds fixed for the whole run."""
        return [s.with_seed(stream_seed(self.seed, LEARNER_SEEDS, k))
                for k, s in enumerate(self.learners)]


@dataclass
class RunResult:
    split: SplitAssignment
    logs: list
    policy: P.PolicyParams
    decoded_by: str = "greedy"
    best_sampled: Optional[SplitAssignment] = None

    @property
    def completed_episodes(self) -> int:
        return len(self.logs)


def _split_problem(dataset: Dataset, train: np.ndarray, metric: str) -> Optional[str]:
    n_train = int(train.sum())
    if n_train < 2 or n_train == train.size:
        return "degenerate split"
    if dataset.task.is_classification:
        y = dataset.targets
        if np.unique(y[train]).size < 2:
            return "single-class training set"
        if metric == M.AUC and np.unique(y[~train]).size < 2:
            return "single-class test set"
    elif np.ptp(dataset.targets[~train]) == 0.0 or (~train).sum() < 2:
        return "constant test targets"
    return None


def fit_predict(specs, dataset: Dataset, train: np.ndarray, n_jobs: int = 1) -> list:
    """Fit each spec on the train rows and predict the test rows.

    Results keep spec order regardless of ``n_jobs``.
    """
    X_tr, y_tr = dataset.subset(train)
    X_te = dataset.features[~train]

    def one(spec):
        model = L.fit(spec, X_tr, y_tr, dataset.task)
        return L.predict(model, X_te)

    if n_jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(one, specs))
    return [one(s) for s in specs]


def _greedy_ratio(policy, dataset) -> float:
    return P._unroll(policy, P.policy_inputs(dataset), "greedy").achieved_ratio


def _converged(logs, greedy_ratios, window) -> bool:
    if window <= 0 or len(logs) < 2 * window:
        return False
    recent = greedy_ratios[-window:]
    if max(recent) - min(recent) > 2 * 0.005:
        return False
    now = np.mean([g.reward for g in logs[-window:]])
    before = np.mean([g.reward for g in logs[-2 * window:-window]])
    return now <= before


def run_rds(dataset: Dataset, config: RunConfig, progress=None) -> RunResult:
    """Train the sampling policy on ``dataset`` and decode the final split."""
    M.check_metric(config.metric, dataset.task)
    for spec in config.learners:
        if not spec.supports(dataset.task):
            raise ValueError(f"{spec.kind} learner does not support {dataset.task} tasks")
    if dataset.task.is_classification:
        counts = np.bincount(dataset.targets, minlength=dataset.task.num_classes)
        if np.any((counts > 0) & (counts < 2)):
            raise ValueError("every class needs at least 2 samples")

    scaled, _ = standardize(dataset)
    mechanism = config.reward_mechanism()
    specs = config.seeded_learners()
    policy = P.init_policy(dataset.n_features, P.target_width(dataset.task),
                           config.hidden_size,
                           seed=stream_seed(config.seed, POLICY_INIT))
    policy = P.pretrain(policy, scaled, config.r, max_passes=config.pretrain_passes)
    opt = P.OptimizerState(lr=config.lr)
    traj_rng = stream(config.seed, TRAJECTORY)
    rho_rng = stream(config.seed, RHO)

    logs: list[EpisodeLog] = []
    greedy_ratios: list[float] = []
    worst: Optional[float] = None
    failures = 0
    # running reward baseline, one per chosen learner (a single one for DET)
    baselines: dict = {}
    best: tuple[float, Optional[np.ndarray]] = (-np.inf, None)
    for episode in range(config.episodes):
        start = time.perf_counter()
        traj = P.sample_trajectory(policy, scaled, traj_rng)
        train = traj.actions
        chosen = (M.choose_learner(mechanism, rho_rng)
                  if mechanism.mode == M.STOCHASTIC else None)
        problem = _split_problem(dataset, train, config.metric)
        metrics = [float("nan")] * len(specs)
        shaped = reward = float("nan")
        if problem is None:
            active = specs if chosen is None else [specs[chosen]]
            preds = fit_predict(active, dataset, train, config.n_jobs)
            y_te = dataset.targets[~train]
            per = [M.score(config.metric, y_te, p) for p in preds]
            if chosen is None:
                metrics = per
                reward = M.episode_return(mechanism, preds, y_te, config.metric)
            else:
                metrics[chosen] = per[0]
                reward = per[0]
            shaped = reward
            if not dataset.task.is_classification and config.psi > 0:
                kl = regularizers.kl_continuous_perez_cruz(
                    dataset.targets[~train], dataset.targets[train], config.knn_k)
                shaped = reward - config.psi * max(kl, 0.0)
        failed = problem is not None or not np.isfinite(shaped)
        if failed:
            failures += 1
            log.debug("episode %d failed: %s", episode, problem or "non-finite reward")
            signal = worst if worst is not None else 0.0
        else:
            signal = shaped
            worst = shaped if worst is None else min(worst, shaped)
            if shaped > best[0]:
                best = (shaped, train.copy())
        baseline = baselines.get(chosen, signal) if config.baseline_subtraction else 0.0
        losses, grads = P.compute_loss_and_grads(
            policy, traj, signal, scaled, config.r, config.alpha, config.gamma,
            config.psi, baseline=baseline)
        policy, opt = P.rmsprop_update(policy, grads, opt)
        if not policy.is_finite():
            raise P.DivergenceError(f"policy parameters diverged at episode {episode}")
        if config.baseline_subtraction:
            m = config.baseline_momentum
            baselines[chosen] = m * baseline + (1 - m) * signal if chosen in baselines else signal
        entry = EpisodeLog(episode, reward if not failed else signal,
                           signal, traj.achieved_ratio, losses.theta, losses.ratio,
                           losses.iid, metrics, chosen,
                           time.perf_counter() - start, failed)
        logs.append(entry)
        if progress is not None:
            progress(entry)
        if failures > config.episodes / 2:
            raise RunAborted(f"{failures} of {episode + 1} episodes failed "
                             f"(last problem: {problem})")
        if config.convergence_window > 0:
            greedy_ratios.append(_greedy_ratio(policy, scaled))
            if _converged(logs, greedy_ratios, config.convergence_window):
                log.info("converged after %d episodes", episode + 1)
                break

    best_split = SplitAssignment(best[1]) if best[1] is not None else None
    split, decoded_by = None, config.decode
    try:
        if config.decode == "greedy":
            split = SplitAssignment(P.greedy_decode(policy, scaled))
        elif config.decode == "constrained":
            split = SplitAssignment(P.constrained_decode(policy, scaled, config.r))
    except P.DegenerateSplitError as exc:
        log.warning("%s decode failed (%s); using the best sampled split",
                    config.decode, exc)
    if split is None:
        if best_split is None:
            raise RunAborted("no valid split: decode degenerate and no episode succeeded")
        split, decoded_by = best_split, "best_sampled"
    return RunResult(split, logs, policy, decoded_by, best_split)


def baseline_random(dataset: Dataset, r: float, seed: int = 0) -> SplitAssignment:
    """Seeded shuffle; the first round(r*M) shuffled samples go to Train."""
    if not 0.0 < r < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    m = dataset.n_samples
    order = np.random.default_rng(seed).permutation(m)
    train = np.zeros(m, dtype=bool)
    train[order[:int(round(r * m))]] = True
    return SplitAssignment(train)


def baseline_stratified(dataset: Dataset, r: float, seed: int = 0) -> SplitAssignment:
    """Per-class proportional allocation with largest-remainder rounding."""
    if not dataset.task.is_classification:
        raise ValueError("stratified requires classification")
    if not 0.0 < r < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    y = dataset.targets
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < 2):
        raise ValueError("stratified split needs at least 2 samples per class")
    total = int(round(r * dataset.n_samples))
    quota = r * counts
    alloc = np.floor(quota).astype(int)
    remainder = quota - alloc
    # ties in the remainder go to the lower class index
    for i in np.argsort(-remainder, kind="stable")[: total - alloc.sum()]:
        alloc[i] += 1
    alloc = np.clip(alloc, 1, counts - 1)
    rng = np.random.default_rng(seed)
    train = np.zeros(dataset.n_samples, dtype=bool)
    for c, n in zip(classes, alloc):
        idx = np.flatnonzero(y == c)
        train[rng.permutation(idx)[:n]] = True
    return SplitAssignment(train)


@dataclass
class Evaluation:
    learner_metrics: list
    ensemble_metric: float
    counts: tuple
    class_ratios: Optional[tuple] = None

    def as_row(self, kinds: Sequence[str], name: str = "") -> dict:
        row = {"split": name, "n_train": self.counts[0], "n_test": self.counts[1]}
        if self.class_ratios is not None:
            row["class_ratio_train"], row["class_ratio_test"] = self.class_ratios
        for i, (kind, v) in enumerate(zip(kinds, self.learner_metrics)):
            row[f"learner_{i}_{kind}"] = v
        row["ensemble"] = self.ensemble_metric
        return row


def class_ratio(pmf: np.ndarray) -> float:
    """Positive-to-negative count ratio for binary targets.

    Multiclass targets report smallest-to-largest class share instead.
    """
    if pmf.size == 2:
        return float(pmf[1] / pmf[0]) if pmf[0] > 0 else float("inf")
    nz = pmf[pmf > 0]
    return float(nz.min() / nz.max())


def evaluate_split(dataset: Dataset, assignment: SplitAssignment,
                   specs: Sequence[L.LearnerSpec], metric: str,
                   n_jobs: int = 1) -> Evaluation:
    """Fit every learner on the train side and score it on the test side."""
    if not assignment.is_valid:
        raise ValueError("split leaves one side empty")
    M.check_metric(metric, dataset.task)
    train = assignment.actions
    preds = fit_predict(list(specs), dataset, train, n_jobs)
    y_te = dataset.targets[~train]
    per = [M.score(metric, y_te, p) for p in preds]
    ensemble = M.score(metric, y_te, M.soft_vote(preds))
    ratios = None
    if dataset.task.is_classification:
        k = dataset.task.num_classes
        ratios = (class_ratio(class_pmf(dataset.targets[train], k)),
                  class_ratio(class_pmf(dataset.targets[~train], k)))
    return Evaluation(per, ensemble, assignment.counts, ratios)
