"""GRU sampling policy with a retained-hidden carry and manual backprop.

The policy reads samples in dataset order. At step t the GRU consumes the
retained hidden state and ``x_t (+) enc(y_t)``; a linear head turns the
new hidden state into two logits (Train, Test). When the step's action is
Train the new hidden state becomes the retained one, otherwise it is
dropped and the previous retained state carries over.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from . import regularizers
from .dataset import Dataset, TaskKind

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-6
CHECKPOINT_VERSION = 1
GATES = ("r", "z", "n")
BLOCKS = ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_n", "U_n", "b_n", "V", "c")


class DivergenceError(FloatingPointError):
    """Raised when a forward or backward pass produces non-finite values."""


class DegenerateSplitError(ValueError):
    """Raised when a decoded split leaves one side empty."""


@dataclass
class PolicyParams:
    """All parameter blocks of the policy.

    ``W_*`` are input weights (E x H), ``U_*`` recurrent weights (H x H),
    ``b_*`` gate biases (H), ``V`` the head (H x 2) and ``c`` its bias.
    Column 0 of the head is the Train logit.
    """

    blocks: dict
    hidden_size: int
    seed: int = 0

    def __getitem__(self, name):
        return self.blocks[name]

    @property
    def input_size(self) -> int:
        return self.blocks["W_r"].shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.blocks.items()},
                            self.hidden_size, self.seed)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.blocks.values())


def init_policy(feature_dim: int, target_width: int, hidden_size: int = 32,
                seed: int = 0) -> PolicyParams:
    """Uniform init in [-1/sqrt(H), 1/sqrt(H)] for every block."""
    if feature_dim < 1 or hidden_size < 1 or target_width < 1:
        raise ValueError("feature_dim, target_width and hidden_size must be positive")
    rng = np.random.default_rng(seed)
    e, h = feature_dim + target_width, hidden_size
    bound = 1.0 / np.sqrt(h)
    shapes = {}
    for g in GATES:
        shapes[f"W_{g}"] = (e, h)
        shapes[f"U_{g}"] = (h, h)
        shapes[f"b_{g}"] = (h,)
    shapes["V"] = (h, 2)
    shapes["c"] = (2,)
    blocks = {k: rng.uniform(-bound, bound, shapes[k]) for k in BLOCKS}
    return PolicyParams(blocks, hidden_size, seed)


def target_width(task: TaskKind) -> int:
    return task.num_classes if task.is_classification else 1


def encode_target(y, task: TaskKind, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    """One-hot class vector, or the standardised regression target."""
    if task.is_classification:
        k = task.num_classes
        if not 0 <= int(y) < k:
            raise ValueError(f"class index {y} out of range for {k} classes")
        out = np.zeros(k)
        out[int(y)] = 1.0
        return out
    return np.array([(float(y) - mean) / (std if std > 1e-12 else 1.0)])


def policy_inputs(dataset: Dataset) -> np.ndarray:
    """Row t is ``x_t (+) enc(y_t)`` for the whole dataset (M x E)."""
    task = dataset.task
    y = dataset.targets
    if task.is_classification:
        enc = np.eye(task.num_classes)[y]
    else:
        std = y.std()
        enc = ((y - y.mean()) / (std if std > 1e-12 else 1.0))[:, None]
    return np.hstack([dataset.features, enc])


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite {what}")


def step(policy: PolicyParams, retained: np.ndarray, x: np.ndarray):
    """One GRU update from the retained hidden state.

    Returns the new hidden state and the clamped Train probability.
    """
    P = policy.blocks
    r = expit(x @ P["W_r"] + retained @ P["U_r"] + P["b_r"])
    z = expit(x @ P["W_z"] + retained @ P["U_z"] + P["b_z"])
    n = np.tanh(x @ P["W_n"] + (r * retained) @ P["U_n"] + P["b_n"])
    h = (1.0 - z) * n + z * retained
    logits = h @ P["V"] + P["c"]
    p = float(np.clip(expit(logits[0] - logits[1]), PROB_FLOOR, 1.0 - PROB_FLOOR))
    _check_finite(h, "hidden state")
    if not np.isfinite(p):
        raise DivergenceError("non-finite action probability")
    return h, p


def carry(retained: np.ndarray, new_hidden: np.ndarray, train: bool) -> np.ndarray:
    """Retained state after a step: only Train samples enter memory."""
    return new_hidden if train else retained


@dataclass
class Trajectory:
    action_probs: np.ndarray  # clamped p(Train | s_t)
    actions: np.ndarray  # True = Train
    log_prob: float
    cache: dict = field(default=None, repr=False)

    @property
    def achieved_ratio(self) -> float:
        return float(np.mean(self.actions))


def _unroll(policy: PolicyParams, inputs: np.ndarray, mode: str,
            uniforms: Optional[np.ndarray] = None,
            actions: Optional[np.ndarray] = None) -> Trajectory:
    """Run the policy over all rows.

    ``mode`` picks actions: "sample" (Train iff u_t < p_t), "greedy"
    (Train iff p_t >= 0.5) or "given" (teacher-forced ``actions``).
    """
    P = policy.blocks
    m, H = inputs.shape[0], policy.hidden_size
    # input projections do not depend on the carry
    xr = inputs @ P["W_r"] + P["b_r"]
    xz = inputs @ P["W_z"] + P["b_z"]
    xn = inputs @ P["W_n"] + P["b_n"]
    U_r, U_z, U_n, V, c = P["U_r"], P["U_z"], P["U_n"], P["V"], P["c"]
    prev = np.empty((m, H))
    R = np.empty((m, H))
    Z = np.empty((m, H))
    N = np.empty((m, H))
    Hs = np.empty((m, H))
    probs = np.empty(m)
    acts = np.empty(m, dtype=bool)
    keep = np.zeros(H)
    for t in range(m):
        r = expit(xr[t] + keep @ U_r)
        z = expit(xz[t] + keep @ U_z)
        n = np.tanh(xn[t] + (r * keep) @ U_n)
        h = (1.0 - z) * n + z * keep
        lg = h @ V + c
        p = expit(lg[0] - lg[1])
        if mode == "sample":
            a = uniforms[t] < p
        elif mode == "greedy":
            a = p >= 0.5
        else:
            a = bool(actions[t])
        prev[t], R[t], Z[t], N[t], Hs[t] = keep, r, z, n, h
        probs[t] = p
        acts[t] = a
        if a:
            keep = h
    _check_finite(Hs, "hidden state")
    raw = probs.copy()
    probs = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    logp = np.where(acts, np.log(probs), np.log(1.0 - probs))
    cache = {"inputs": inputs, "prev": prev, "r": R, "z": Z, "n": N, "h": Hs,
             "raw": raw}
    return Trajectory(probs, acts, float(logp.sum()), cache)


def sample_trajectory(policy: PolicyParams, dataset: Dataset,
                      rng: np.random.Generator) -> Trajectory:
    uniforms = rng.random(dataset.n_samples)
    return _unroll(policy, policy_inputs(dataset), "sample", uniforms=uniforms)


def replay(policy: PolicyParams, dataset: Dataset, actions) -> Trajectory:
    """Re-run the policy with fixed actions (used for gradient checks)."""
    return _unroll(policy, policy_inputs(dataset), "given",
                   actions=np.asarray(actions, dtype=bool))


def greedy_decode(policy: PolicyParams, dataset: Dataset) -> np.ndarray:
    """Argmax action per sample; p = 0.5 exactly goes to Train.

    Returns a boolean Train mask. Raises :class:`DegenerateSplitError` when
    either side comes out empty.
    """
    traj = _unroll(policy, policy_inputs(dataset), "greedy")
    if traj.actions.all() or not traj.actions.any():
        raise DegenerateSplitError(
            f"greedy decode put all {dataset.n_samples} samples on one side")
    return traj.actions


def _top_k(probs: np.ndarray, k: int) -> np.ndarray:
    # stable order: equal probabilities favour the earlier sample
    mask = np.zeros(probs.size, dtype=bool)
    mask[np.argsort(-probs, kind="stable")[:k]] = True
    return mask


def class_quotas(probs: np.ndarray, labels: np.ndarray, k: int) -> dict:
    """Split ``k`` Train slots across classes in proportion to expected counts.

    Class ``c`` is owed ``sum(probs[labels == c])`` rescaled so the owed
    amounts total ``k``; largest-remainder rounding makes them integers.
    Classes with at least 2 members keep one sample on each side.
    """
    classes = np.unique(labels)
    sizes = np.array([np.sum(labels == c) for c in classes])
    owed = np.array([probs[labels == c].sum() for c in classes])
    owed = owed * (k / owed.sum()) if owed.sum() > 0 else k * sizes / sizes.sum()
    lo = np.where(sizes >= 2, 1, 0)
    hi = np.where(sizes >= 2, sizes - 1, sizes)
    alloc = np.clip(np.floor(owed).astype(int), lo, hi)
    # hand out (or take back) single slots by fractional part, round robin
    order = np.argsort(-(owed - np.floor(owed)), kind="stable")
    while alloc.sum() != k:
        step = 1 if alloc.sum() < k else -1
        moved = False
        for i in (order if step > 0 else order[::-1]):
            if alloc.sum() != k and lo[i] <= alloc[i] + step <= hi[i]:
                alloc[i] += step
                moved = True
        if not moved:
            break
    return dict(zip(classes.tolist(), alloc.tolist()))


def _select(probs: np.ndarray, k: int, labels: Optional[np.ndarray]) -> np.ndarray:
    if labels is None:
        return _top_k(probs, k)
    mask = np.zeros(probs.size, dtype=bool)
    for c, n in class_quotas(probs, labels, k).items():
        idx = np.flatnonzero(labels == c)
        mask[idx[_top_k(probs[idx], n)]] = True
    return mask


def constrained_decode(policy: PolicyParams, dataset: Dataset, r: float,
                       max_iter: int = 25, by_class: Optional[bool] = None) -> np.ndarray:
    """Argmax decode under the constraint of exactly ``round(r * M)`` Train.

    The ``round(r * M)`` samples with the highest Train probability go to
    Train. For classification (``by_class``, on by default) the slots are
    first shared out per class by :func:`class_quotas` and the ranking is
    done within each class. Because probabilities depend on the carry,
    which depends on the assignment, this repeats until the assignment
    reproduces itself (or a cycle or ``max_iter`` is reached). When plain
    argmax already satisfies the allocation the two decoders agree.
    """
    if by_class is None:
        by_class = dataset.task.is_classification
    labels = np.asarray(dataset.targets) if by_class else None
    inputs = policy_inputs(dataset)
    m = dataset.n_samples
    k = min(max(int(round(r * m)), 1), m - 1)
    greedy = _unroll(policy, inputs, "greedy")
    acts = _select(greedy.cache["raw"], k, labels)
    if np.array_equal(acts, greedy.actions):
        return acts
    seen = {acts.tobytes()}
    for _ in range(max_iter):
        raw = _unroll(policy, inputs, "given", actions=acts).cache["raw"]
        new = _select(raw, k, labels)
        if np.array_equal(new, acts) or new.tobytes() in seen:
            return new
        seen.add(new.tobytes())
        acts = new
    log.debug("constrained decode did not reach a fixed point in %d rounds", max_iter)
    return acts


def _backward(policy: PolicyParams, traj: Trajectory, d_prob: np.ndarray) -> dict:
    """Backprop dL/dp_t through the head and the retained-hidden graph."""
    P = policy.blocks
    c = traj.cache
    X, prev, R, Z, N, Hs = c["inputs"], c["prev"], c["r"], c["z"], c["n"], c["h"]
    acts = traj.actions
    raw = c["raw"]
    # clamped probabilities have zero slope
    live = (raw > PROB_FLOOR) & (raw < 1.0 - PROB_FLOOR)
    d_diff = np.where(live, d_prob * raw * (1.0 - raw), 0.0)
    d_logits = np.stack([d_diff, -d_diff], axis=1)
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    grads["V"] = Hs.T @ d_logits
    grads["c"] = d_logits.sum(axis=0)
    d_h_local = d_logits @ P["V"].T

    m, H = Hs.shape
    d_pre_r = np.empty((m, H))
    d_pre_z = np.empty((m, H))
    d_pre_n = np.empty((m, H))
    U_r, U_z, U_n = P["U_r"], P["U_z"], P["U_n"]
    d_keep = np.zeros(H)  # gradient w.r.t. the retained state after step t
    for t in range(m - 1, -1, -1):
        if acts[t]:
            dh = d_h_local[t] + d_keep
            d_keep = np.zeros(H)
        else:
            dh = d_h_local[t]
        hp, r, z, n = prev[t], R[t], Z[t], N[t]
        dn = dh * (1.0 - z)
        dz = dh * (hp - n)
        dhp = dh * z
        dpn = dn * (1.0 - n * n)
        d_rh = dpn @ U_n.T
        dr = d_rh * hp
        dhp = dhp + d_rh * r
        dpz = dz * z * (1.0 - z)
        dpr = dr * r * (1.0 - r)
        dhp = dhp + dpz @ U_z.T + dpr @ U_r.T
        d_pre_r[t], d_pre_z[t], d_pre_n[t] = dpr, dpz, dpn
        d_keep = d_keep + dhp
    grads["W_r"] = X.T @ d_pre_r
    grads["W_z"] = X.T @ d_pre_z
    grads["W_n"] = X.T @ d_pre_n
    grads["b_r"] = d_pre_r.sum(axis=0)
    grads["b_z"] = d_pre_z.sum(axis=0)
    grads["b_n"] = d_pre_n.sum(axis=0)
    grads["U_r"] = prev.T @ d_pre_r
    grads["U_z"] = prev.T @ d_pre_z
    grads["U_n"] = (R * prev).T @ d_pre_n
    for k, g in grads.items():
        _check_finite(g, f"gradient for {k}")
    return grads


@dataclass
class LossBreakdown:
    theta: float
    ratio: float
    iid: float

    @property
    def total(self) -> float:
        return self.theta + self.ratio + self.iid


def compute_loss_and_grads(policy: PolicyParams, trajectory: Trajectory,
                           reward: float, dataset: Dataset, r: float,
                           alpha: float = 1.0, gamma: float = 0.9,
                           psi: float = 0.1, baseline: float = 0.0):
    """Policy loss and its gradient for one sampled trajectory.

    The loss is the REINFORCE surrogate ``-alpha * log pi(tau) * (R - b)``
    plus the ratio penalty on mean action probability plus, for
    classification, the soft class-distribution KL penalty.
    """
    p = trajectory.action_probs
    a = trajectory.actions
    adv = reward - baseline
    theta = -alpha * trajectory.log_prob * adv
    d_prob = -alpha * adv * np.where(a, 1.0 / p, -1.0 / (1.0 - p))

    ratio = regularizers.ratio_penalty(float(p.mean()), r, gamma)
    d_prob = d_prob + regularizers.ratio_penalty_grad(p, r, gamma)

    iid = 0.0
    task = dataset.task
    if task.is_classification and psi > 0.0:
        iid = regularizers.iid_penalty_soft(p, dataset.targets, task.num_classes, psi)
        d_prob = d_prob + regularizers.iid_penalty_soft_grad(
            p, dataset.targets, task.num_classes, psi)
    grads = _backward(policy, trajectory, d_prob)
    return LossBreakdown(float(theta), float(ratio), float(iid)), grads


@dataclass
class OptimizerState:
    lr: float = 1e-3
    decay: float = 0.99
    eps: float = 1e-8
    step_count: int = 0
    accumulators: dict = field(default_factory=dict)


def rmsprop_update(policy: PolicyParams, grads: dict, state: OptimizerState):
    """One RMSprop step; returns new params and state, inputs untouched."""
    new_blocks = {}
    new_acc = {}
    for k, theta in policy.blocks.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {k} {theta.shape}")
        acc = state.accumulators.get(k, np.zeros_like(theta))
        acc = state.decay * acc + (1.0 - state.decay) * g * g
        new_acc[k] = acc
        new_blocks[k] = theta - state.lr * g / (np.sqrt(acc) + state.eps)
    new_state = OptimizerState(state.lr, state.decay, state.eps,
                               state.step_count + 1, new_acc)
    return PolicyParams(new_blocks, policy.hidden_size, policy.seed), new_state


def pretrain(policy: PolicyParams, dataset: Dataset, r: float, max_passes: int = 500,
             lr: float = 1e-2, tol: float = 0.01) -> PolicyParams:
    """Fit p(Train | s_t) to the constant ``r`` by binary cross-entropy.

    Each pass unrolls the policy with greedy carry and takes one RMSprop
    step. Stops once the mean Train probability is within ``tol`` of ``r``.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    inputs = policy_inputs(dataset)
    state = OptimizerState(lr=lr)
    best, best_gap = policy, np.inf
    m = dataset.n_samples
    for _ in range(max_passes):
        traj = _unroll(policy, inputs, "greedy")
        gap = abs(traj.action_probs.mean() - r)
        if gap < best_gap:
            best, best_gap = policy, gap
        if gap <= tol:
            return policy
        p = traj.action_probs
        # d BCE / dp, divided by p(1-p) again in _backward's sigmoid slope
        d_prob = (p - r) / (p * (1.0 - p)) / m
        grads = _backward(policy, traj, d_prob)
        policy, state = rmsprop_update(policy, grads, state)
    log.warning("pretraining stopped after %d passes, |mean p - r| = %.4f",
                max_passes, best_gap)
    return best


def save_checkpoint(policy: PolicyParams, path) -> None:
    """Write every block plus hidden size, seed and format version (.npz)."""
    buf = io.BytesIO()
    np.savez(buf, __version__=np.array(CHECKPOINT_VERSION),
             __hidden_size__=np.array(policy.hidden_size),
             __seed__=np.array(policy.seed), **policy.blocks)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> PolicyParams:
    with np.load(Path(path)) as data:
        version = int(data["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        blocks = {k: data[k].copy() for k in BLOCKS}
        return PolicyParams(blocks, int(data["__hidden_size__"]), int(data["__seed__"]))
