"""Seeded synthetic datasets for desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset, TaskKind


def synth_madelon(n_samples: int = 520, n_informative: int = 5,
                  n_distractors: int = 45, class_sep: float = 0.3,
                  seed: int = 0) -> Dataset:
    """Two-class Gaussian clusters on informative columns plus pure-noise columns.

    Each class is a mixture of two clusters placed on random hypercube
    vertices of side ``2 * class_sep`` in the informative subspace, so the
    signal is partly nonlinear. Classes are balanced.
    """
    if min(n_samples, n_informative) < 1 or n_distractors < 0:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(seed)
    y = np.arange(n_samples) % 2
    rng.shuffle(y)
    n_clusters = 2
    # distinct vertices per (class, cluster); every informative column must
    # separate the class means, otherwise it carries no marginal signal
    while True:
        vertices = rng.integers(0, 2, (2 * n_clusters, n_informative))
        distinct = len({tuple(v) for v in vertices}) == 2 * n_clusters
        gap = vertices[n_clusters:].sum(axis=0) - vertices[:n_clusters].sum(axis=0)
        if distinct and np.all(gap != 0):
            break
    vertices = vertices.astype(float)
    centers = (2.0 * vertices - 1.0) * class_sep
    cluster = rng.integers(0, n_clusters, n_samples)
    informative = centers[2 * y + cluster] + rng.normal(size=(n_samples, n_informative))
    noise = rng.normal(size=(n_samples, n_distractors))
    X = np.hstack([informative, noise])
    names = [f"inf{j}" for j in range(n_informative)] + \
            [f"noise{j}" for j in range(n_distractors)]
    return Dataset(X, y, TaskKind.binary(), feature_names=tuple(names))


def synth_imbalanced(n_samples: int = 400, positive_fraction: float = 0.05,
                     n_features: int = 5, class_sep: float = 1.0,
                     seed: int = 0) -> Dataset:
    """Binary data with an exact positive count of round(fraction * n)."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_fraction * n_samples))
    y = np.zeros(n_samples, dtype=int)
    y[:n_pos] = 1
    y = rng.permutation(y)
    X = rng.normal(size=(n_samples, n_features))
    X[:, 0] += class_sep * y
    return Dataset(X, y, TaskKind.binary())


def synth_regression(n_samples: int = 300, n_features: int = 5, noise: float = 0.5,
                     seed: int = 0) -> Dataset:
    """Linear targets with Gaussian noise and one mild nonlinearity."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_features))
    w = rng.normal(size=n_features)
    y = X @ w + 0.5 * np.sin(2 * X[:, 0]) + noise * rng.normal(size=n_samples)
    return Dataset(X, y, TaskKind.regression())


def synth_balanced(n_samples: int = 200, n_features: int = 4, class_sep: float = 1.0,
                   seed: int = 0) -> Dataset:
    """Balanced binary Gaussian blobs."""
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n_samples) % 2)
    X = rng.normal(size=(n_samples, n_features))
    X[:, 0] += class_sep * (2 * y - 1)
    return Dataset(X, y, TaskKind.binary())
