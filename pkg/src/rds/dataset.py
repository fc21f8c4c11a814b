"""Dataset container, CSV ingestion and target summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

BINARY = "binary"
MULTICLASS = "multiclass"
REGRESSION = "regression"


class DataError(ValueError):
    """Raised when a dataset fails validation."""


@dataclass(frozen=True)
class TaskKind:
    kind: str
    num_classes: Optional[int] = None

    def __post_init__(self):
        if self.kind == BINARY:
            object.__setattr__(self, "num_classes", 2)
        elif self.kind == MULTICLASS:
            if self.num_classes is None or self.num_classes < 3:
                raise DataError("multiclass task needs num_classes >= 3")
        elif self.kind == REGRESSION:
            object.__setattr__(self, "num_classes", None)
        else:
            raise DataError(f"unknown task kind {self.kind!r}")

    @classmethod
    def binary(cls) -> "TaskKind":
        return cls(BINARY)

    @classmethod
    def multiclass(cls, num_classes: int) -> "TaskKind":
        return cls(MULTICLASS, num_classes)

    @classmethod
    def regression(cls) -> "TaskKind":
        return cls(REGRESSION)

    @classmethod
    def parse(cls, text: str, num_classes: Optional[int] = None) -> "TaskKind":
        """Parse ``binary``, ``regression``, ``multiclass`` or ``multiclass:K``."""
        text = text.strip().lower()
        if ":" in text:
            text, k = text.split(":", 1)
            num_classes = int(k)
        return cls(text, num_classes)

    @property
    def is_classification(self) -> bool:
        return self.kind != REGRESSION

    def __str__(self):
        if self.kind == MULTICLASS:
            return f"multiclass:{self.num_classes}"
        return self.kind


@dataclass(frozen=True)
class Dataset:
    """The full population to be split.

    ``targets`` holds integer class indices for classification tasks and
    floats for regression.
    """

    features: np.ndarray
    targets: np.ndarray
    task: TaskKind
    ids: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        m, d = X.shape
        if m < 4:
            raise DataError(f"need at least 4 samples, got {m}")
        if d < 1:
            raise DataError("need at least one feature")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        y = np.asarray(self.targets)
        if y.shape != (m,):
            raise DataError(f"targets must have length {m}")
        if self.task.is_classification:
            yf = y.astype(float)
            if not np.all(np.isfinite(yf)) or np.any(yf != np.round(yf)):
                raise DataError("non-integral class label")
            y = yf.astype(np.int64)
            if y.min() < 0 or y.max() >= self.task.num_classes:
                raise DataError(
                    f"class labels must lie in [0, {self.task.num_classes})")
        else:
            y = y.astype(float)
            if not np.all(np.isfinite(y)):
                raise DataError("non-finite regression target")
        ids = tuple(self.ids) if len(self.ids) else tuple(range(m))
        if len(ids) != m:
            raise DataError("ids must have one entry per sample")
        if len(set(ids)) != m:
            raise DataError("ids must be unique")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(d))
        if len(names) != d:
            raise DataError("feature_names must have one entry per column")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Features and targets of the rows selected by a boolean mask, in order."""
        mask = np.asarray(mask, dtype=bool)
        return self.features[mask], self.targets[mask]


def _cell(value: str, row: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"non-numeric value {value!r} at row {row}, column {column!r}") from None
    if not math.isfinite(out):
        raise DataError(f"non-finite value at row {row}, column {column!r}")
    return out


def load_csv(path, target_column: str, task: TaskKind,
             id_column: Optional[str] = None) -> Dataset:
    """Read a headered numeric CSV into a :class:`Dataset`.

    Rows keep file order. Without ``id_column`` the ids are 0-based row
    indices. Rows are numbered from 0, excluding the header.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    for col in (target_column, id_column):
        if col is not None and col not in header:
            raise DataError(f"column {col!r} not found in {path}")
    t_idx = header.index(target_column)
    i_idx = header.index(id_column) if id_column is not None else None
    f_idx = [j for j in range(len(header)) if j not in (t_idx, i_idx)]

    features, targets, ids = [], [], []
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} fields, expected {len(header)}")
        features.append([_cell(row[j], i, header[j]) for j in f_idx])
        y = _cell(row[t_idx], i, target_column)
        if task.is_classification and y != round(y):
            raise DataError(f"non-integral class label {row[t_idx]!r} at row {i}")
        targets.append(y)
        ids.append(row[i_idx].strip() if i_idx is not None else i)

    X = np.array(features, dtype=float).reshape(len(rows), len(f_idx))
    return Dataset(X, np.array(targets), task, ids=tuple(ids),
                   feature_names=tuple(header[j] for j in f_idx))


@dataclass(frozen=True)
class Scaling:
    mean: np.ndarray
    std: np.ndarray

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * np.where(self.std < 1e-12, 0.0, self.std) + self.mean


def standardize(dataset: Dataset) -> tuple[Dataset, Scaling]:
    """Z-score every feature on the full dataset (population std, ddof=0).

    Columns with std below 1e-12 become all-zero.
    """
    X = dataset.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    safe = np.where(std < 1e-12, 1.0, std)
    Z = np.where(std < 1e-12, 0.0, (X - mean) / safe)
    return replace(dataset, features=Z), Scaling(mean, std)


def class_pmf(targets: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(targets, dtype=np.int64), minlength=num_classes)
    return counts / counts.sum()


def target_distribution(dataset: Dataset, actions: Sequence[bool]):
    """Per-side target summaries for a split.

    ``actions`` is True for Train. Classification returns two class PMFs;
    regression returns the raw train and test target arrays.
    """
    train = np.asarray(actions, dtype=bool)
    if train.shape != (dataset.n_samples,):
        raise DataError("assignment length does not match dataset")
    if not train.any():
        raise DataError("empty train side")
    if train.all():
        raise DataError("empty test side")
    y = dataset.targets
    if dataset.task.is_classification:
        k = dataset.task.num_classes
        return class_pmf(y[train], k), class_pmf(y[~train], k)
    return y[train].copy(), y[~train].copy()
