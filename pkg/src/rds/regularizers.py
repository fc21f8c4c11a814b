"""Sampling-ratio and distribution-matching penalties."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

SMOOTHING = 1e-9
DISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerConfig:
    gamma: float = 0.9
    psi: float = 0.1
    r: float = 0.75
    knn_k: int = 1

    def __post_init__(self):
        if self.gamma < 0 or self.psi < 0:
            raise ValueError("penalty scales must be nonnegative")
        if not 0.0 < self.r < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if self.knn_k < 1:
            raise ValueError("knn_k must be positive")


def ratio_penalty(mean_prob: float, r: float, gamma: float) -> float:
    return gamma * abs(mean_prob - r)


def ratio_penalty_grad(action_probs: np.ndarray, r: float, gamma: float) -> np.ndarray:
    """d/dp_t of gamma*|mean(p) - r|; the subgradient at the kink is 0."""
    p = np.asarray(action_probs, dtype=float)
    return np.full(p.shape, gamma * np.sign(p.mean() - r) / p.size)


def _check_pmf(p: np.ndarray, name: str) -> None:
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"{name} does not sum to 1")


def kl_discrete(p, q) -> float:
    """KL(p || q) in nats, with 0 log 0 = 0.

    Where q has a zero that p does not, q gets SMOOTHING added to every
    entry and is renormalised.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("PMFs have different support sizes")
    _check_pmf(p, "p")
    _check_pmf(q, "q")
    if np.any((q == 0) & (p > 0)):
        q = (q + SMOOTHING) / (1.0 + SMOOTHING * q.size)
    nz = p > 0
    return float(max(np.sum(p[nz] * np.log(p[nz] / q[nz])), 0.0))


def _kth_distance(tree: cKDTree, points: np.ndarray, k: int) -> np.ndarray:
    dist, _ = tree.query(points, k=k)
    dist = dist if dist.ndim == 1 else dist[:, -1]
    return np.maximum(dist, DISTANCE_FLOOR)


def kl_continuous_perez_cruz(samples_p, samples_q, k: int = 1) -> float:
    """Nearest-neighbour KL(P || Q) estimate from 1-D samples.

    Uses the k-th neighbour distance of each P sample within the rest of P
    and within Q. The raw estimate can dip slightly below zero.
    """
    x = np.asarray(samples_p, dtype=float).reshape(-1, 1)
    z = np.asarray(samples_q, dtype=float).reshape(-1, 1)
    n, m = len(x), len(z)
    if n < k + 1 or m < k:
        raise ValueError(f"need n >= {k + 1} and m >= {k} samples, got n={n}, m={m}")
    d = x.shape[1]
    # k+1 because the query point is its own nearest neighbour in P
    rho = _kth_distance(cKDTree(x), x, k + 1)
    nu = _kth_distance(cKDTree(z), x, k)
    return float(d / n * np.sum(np.log(nu / rho)) + np.log(m / (n - 1)))


def soft_class_masses(action_probs, targets, num_classes: int):
    """Probability-weighted class distributions of the train and test sides."""
    pi = np.asarray(action_probs, dtype=float)
    onehot = np.eye(num_classes)[np.asarray(targets, dtype=np.int64)]
    train = pi @ onehot
    test = (1.0 - pi) @ onehot
    return train / train.sum(), test / test.sum()


def iid_penalty_soft(action_probs, targets, num_classes: int, psi: float) -> float:
    """psi * KL(p_test || p_train) on probability-weighted class masses."""
    if psi == 0.0:
        return 0.0
    p_train, p_test = soft_class_masses(action_probs, targets, num_classes)
    return psi * _kl_smoothed(p_test, p_train)


def _kl_smoothed(p: np.ndarray, q: np.ndarray) -> float:
    ps = (p + SMOOTHING) / (1.0 + SMOOTHING * p.size)
    qs = (q + SMOOTHING) / (1.0 + SMOOTHING * q.size)
    return float(np.sum(ps * np.log(ps / qs)))


def iid_penalty_soft_grad(action_probs, targets, num_classes: int, psi: float) -> np.ndarray:
    """Gradient of :func:`iid_penalty_soft` with respect to each action prob."""
    pi = np.asarray(action_probs, dtype=float)
    if psi == 0.0:
        return np.zeros_like(pi)
    onehot = np.eye(num_classes)[np.asarray(targets, dtype=np.int64)]
    a = pi @ onehot
    b = (1.0 - pi) @ onehot
    sa, sb = a.sum(), b.sum()
    c = num_classes
    p = (b / sb + SMOOTHING) / (1.0 + SMOOTHING * c)  # test side
    q = (a / sa + SMOOTHING) / (1.0 + SMOOTHING * c)  # train side
    dkl_dp = np.log(p / q) + 1.0
    dkl_dq = -p / q
    # chain through the normalisations a/sa and b/sb
    scale = 1.0 / (1.0 + SMOOTHING * c)
    g_a = scale * (dkl_dq - np.dot(dkl_dq, a) / sa) / sa
    g_b = scale * (dkl_dp - np.dot(dkl_dp, b) / sb) / sb
    # a_c = sum pi_i [y_i=c], b_c = sum (1-pi_i) [y_i=c]
    return psi * (onehot @ g_a - onehot @ g_b)
