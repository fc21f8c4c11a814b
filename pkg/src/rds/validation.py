"""Input validation helpers shared by the estimator and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_X_y

from .dataset import Dataset, TaskKind


def check_ratio(r, name="ratio") -> float:
    if not isinstance(r, numbers.Real) or not 0.0 < float(r) < 1.0:
        raise ValueError(f"{name} must be a real number in (0, 1), got {r!r}")
    return float(r)


def check_nonnegative(value, name) -> float:
    if not isinstance(value, numbers.Real) or value < 0:
        raise ValueError(f"{name} must be a nonnegative number, got {value!r}")
    return float(value)


def check_positive_int(value, name) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def infer_task(y) -> TaskKind:
    """Regression for non-integral numeric targets, else binary/multiclass."""
    y = np.asarray(y)
    if y.dtype.kind == "f" and np.any(y != np.round(y)):
        return TaskKind.regression()
    n = np.unique(y).size
    if n <= 2:
        return TaskKind.binary()
    return TaskKind.multiclass(n)


def as_dataset(X, y, task=None, ids=None):
    """Validate ``X, y`` and wrap them as a :class:`Dataset`.

    Returns the dataset and, for classification, the fitted label encoder
    mapping original labels to class indices (None for regression).
    """
    X, y = check_X_y(X, y, dtype=float if task is None or not task.is_classification
                     else None, y_numeric=False, ensure_min_samples=4)
    X = np.asarray(X, dtype=float)
    if task is None:
        task = infer_task(y)
    if isinstance(task, str):
        task = TaskKind.parse(task)
    encoder = None
    if task.is_classification:
        encoder = LabelEncoder().fit(y)
        y = encoder.transform(y)
        if task.kind == "binary" and encoder.classes_.size > 2:
            raise ValueError("binary task but more than two labels")
    else:
        y = np.asarray(y, dtype=float)
    return Dataset(X, y, task, ids=tuple(ids) if ids is not None else ()), encoder
