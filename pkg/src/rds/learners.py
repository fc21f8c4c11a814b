"""Seeded, bit-reproducible base learners used as reward value functions.

Every learner z-scores its inputs with statistics from its own training
set. Classification learners expose ``predict_proba`` with one column per
class of the task, even when the training set misses a class.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor
from sklearn.utils.validation import check_is_fitted

from .dataset import TaskKind

LOGISTIC = "logistic"
RIDGE = "ridge"
TREE = "tree"
FOREST = "forest"
MLP = "mlp"
KINDS = (LOGISTIC, RIDGE, TREE, FOREST, MLP)


class LearnerError(RuntimeError):
    pass


def _zscore_fit(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std < 1e-12, 1.0, std)


class _Scaled:
    """Mixin holding a per-feature scaler fit on the training rows."""

    def _fit_scaler(self, X):
        self.mean_, self.scale_ = _zscore_fit(X)
        self.n_features_in_ = X.shape[1]
        return (X - self.mean_) / self.scale_

    def _scale(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got shape {X.shape}")
        return (X - self.mean_) / self.scale_


def _expand_proba(proba, seen, n_classes):
    out = np.zeros((proba.shape[0], n_classes))
    out[:, seen] = proba
    return out


class LogisticRegression(_Scaled, ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression with an L2 penalty, fit by L-BFGS.

    The objective is ``sum(log loss) + ||W||^2 / (2 C)``; the intercept is
    not penalised. Optimisation stops at gradient tolerance ``tol`` or after
    ``max_iter`` iterations.
    """

    def __init__(self, C=1.0, tol=1e-6, max_iter=500, n_classes=None):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.n_classes = n_classes

    def _unpack(self, theta, d, k):
        return theta[: d * k].reshape(d, k), theta[d * k:]

    def _objective(self, theta, Z, Y):
        d, k = Z.shape[1], Y.shape[1]
        W, b = self._unpack(theta, d, k)
        logits = Z @ W + b
        logp = log_softmax(logits, axis=1)
        loss = -np.sum(Y * logp) + 0.5 * np.sum(W * W) / self.C
        err = np.exp(logp) - Y
        gW = Z.T @ err + W / self.C
        gb = err.sum(axis=0)
        return loss, np.concatenate([gW.ravel(), gb])

    def fit(self, X, y):
        Z = self._fit_scaler(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=np.int64)
        k = self.n_classes or int(y.max()) + 1
        self.classes_ = np.arange(k)
        Y = np.eye(k)[y]
        theta0 = np.zeros(Z.shape[1] * k + k)
        res = minimize(self._objective, theta0, args=(Z, Y), jac=True,
                       method="L-BFGS-B",
                       options={"maxiter": self.max_iter, "gtol": self.tol})
        if not np.isfinite(res.fun):
            raise LearnerError("logistic regression loss became non-finite")
        self.coef_, self.intercept_ = self._unpack(res.x, Z.shape[1], k)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        return softmax(self._scale(X) @ self.coef_ + self.intercept_, axis=1)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class RidgeRegression(_Scaled, RegressorMixin, BaseEstimator):
    """Ridge regression solved through the normal equations."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        Z = self._fit_scaler(X)
        y_mean = y.mean()
        A = Z.T @ Z + self.alpha * np.eye(Z.shape[1])
        w = np.linalg.lstsq(A, Z.T @ (y - y_mean), rcond=None)[0]
        # report coefficients in the caller's units
        self.coef_ = w / self.scale_
        self.intercept_ = y_mean - self.mean_ @ self.coef_
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got shape {X.shape}")
        return X @ self.coef_ + self.intercept_


class MLPNetwork(_Scaled, BaseEstimator):
    """One tanh hidden layer trained with minibatch RMSprop.

    Classification uses a softmax output with cross-entropy; regression a
    linear output with half mean squared error on standardised targets.
    """

    def __init__(self, hidden=64, epochs=200, lr=1e-3, decay=0.99, eps=1e-8,
                 batch_size=64, seed=0, n_classes=None):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.batch_size = batch_size
        self.seed = seed
        self.n_classes = n_classes

    @property
    def _classifier(self):
        return self.n_classes is not None

    def _layout(self, d, k):
        h = self.hidden
        return {"W1": (d, h), "b1": (h,), "W2": (h, k), "b2": (k,)}

    @staticmethod
    def _views(flat, layout):
        out, pos = {}, 0
        for name, shape in layout.items():
            size = int(np.prod(shape))
            out[name] = flat[pos:pos + size].reshape(shape)
            pos += size
        return out

    def init_params(self, d, k, rng):
        """Flat parameter vector and its named block views."""
        layout = self._layout(d, k)
        flat = np.zeros(sum(int(np.prod(s)) for s in layout.values()))
        params = self._views(flat, layout)
        b1 = 1.0 / np.sqrt(d)
        b2 = 1.0 / np.sqrt(self.hidden)
        params["W1"][...] = rng.uniform(-b1, b1, layout["W1"])
        params["W2"][...] = rng.uniform(-b2, b2, layout["W2"])
        return flat, params

    def forward(self, params, Z):
        a = np.tanh(Z @ params["W1"] + params["b1"])
        return a, a @ params["W2"] + params["b2"]

    def loss_and_grad(self, params, Z, T, grads=None):
        """Mean loss over the batch and its gradient for every block.

        ``T`` is one-hot for classification, a column of targets otherwise.
        ``grads`` may hold preallocated output blocks.
        """
        n = Z.shape[0]
        a, out = self.forward(params, Z)
        if self._classifier:
            shifted = out - out.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            s = e.sum(axis=1, keepdims=True)
            loss = -np.sum(T * (shifted - np.log(s))) / n
            d_out = (e / s - T) / n
        else:
            diff = out - T
            loss = 0.5 * np.sum(diff * diff) / n
            d_out = diff / n
        d_pre = (d_out @ params["W2"].T) * (1.0 - a * a)
        if grads is None:
            grads = {k: np.empty_like(v) for k, v in params.items()}
        np.matmul(Z.T, d_pre, out=grads["W1"])
        np.sum(d_pre, axis=0, out=grads["b1"])
        np.matmul(a.T, d_out, out=grads["W2"])
        np.sum(d_out, axis=0, out=grads["b2"])
        return loss, grads

    def fit(self, X, y):
        Z = self._fit_scaler(np.asarray(X, dtype=float))
        rng = np.random.default_rng(self.seed)
        if self._classifier:
            self.classes_ = np.arange(self.n_classes)
            T = np.eye(self.n_classes)[np.asarray(y, dtype=np.int64)]
            self.y_mean_, self.y_scale_ = 0.0, 1.0
        else:
            y = np.asarray(y, dtype=float)
            self.y_mean_ = y.mean()
            self.y_scale_ = y.std() if y.std() > 1e-12 else 1.0
            T = ((y - self.y_mean_) / self.y_scale_)[:, None]
        flat, params = self.init_params(Z.shape[1], T.shape[1], rng)
        g_flat = np.zeros_like(flat)
        grads = self._views(g_flat, self._layout(Z.shape[1], T.shape[1]))
        acc = np.zeros_like(flat)
        n = Z.shape[0]
        bs = min(self.batch_size, n)
        d, lr, eps = self.decay, self.lr, self.eps
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                loss, _ = self.loss_and_grad(params, Z[idx], T[idx], grads)
                acc *= d
                acc += (1.0 - d) * g_flat * g_flat
                flat -= lr * g_flat / (np.sqrt(acc) + eps)
            if not np.isfinite(loss):
                raise LearnerError("MLP loss became non-finite")
        self.params_ = params
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return softmax(self.forward(self.params_, self._scale(X))[1], axis=1)

    def predict(self, X):
        check_is_fitted(self, "params_")
        out = self.forward(self.params_, self._scale(X))[1]
        if self._classifier:
            return np.argmax(out, axis=1)
        return out[:, 0] * self.y_scale_ + self.y_mean_


class _SklearnTree(_Scaled, BaseEstimator):
    """Adapter giving sklearn trees the shared scaling and class layout."""

    def __init__(self, estimator, n_classes=None):
        self.estimator = estimator
        self.n_classes = n_classes

    def fit(self, X, y):
        Z = self._fit_scaler(np.asarray(X, dtype=float))
        self.model_ = self.estimator.fit(Z, y)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        proba = self.model_.predict_proba(self._scale(X))
        return _expand_proba(proba, self.model_.classes_.astype(int), self.n_classes)

    def predict(self, X):
        check_is_fitted(self, "model_")
        if self.n_classes is not None:
            return np.argmax(self.predict_proba(X), axis=1)
        return self.model_.predict(self._scale(X))


DEFAULTS = {
    LOGISTIC: {"C": 1.0, "tol": 1e-6, "max_iter": 500},
    RIDGE: {"alpha": 1.0},
    TREE: {"max_depth": 8, "min_samples_leaf": 2},
    FOREST: {"n_estimators": 16, "max_depth": 8, "min_samples_leaf": 2},
    MLP: {"hidden": 64, "epochs": 200, "lr": 1e-3, "batch_size": 64},
}


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparameters: {sorted(unknown)}")

    @property
    def params(self) -> dict:
        return {**DEFAULTS[self.kind], **self.hyperparameters}

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.kind, dict(self.hyperparameters), int(seed))

    def supports(self, task: TaskKind) -> bool:
        if self.kind == LOGISTIC:
            return task.is_classification
        if self.kind == RIDGE:
            return not task.is_classification
        return True


def build(spec: LearnerSpec, task: TaskKind):
    """An unfitted estimator for ``spec`` on ``task``."""
    if not spec.supports(task):
        raise ValueError(f"{spec.kind} learner does not support {task} tasks")
    p = spec.params
    k = task.num_classes
    if spec.kind == LOGISTIC:
        return LogisticRegression(n_classes=k, **p)
    if spec.kind == RIDGE:
        return RidgeRegression(**p)
    if spec.kind == MLP:
        return MLPNetwork(n_classes=k, seed=spec.seed, **p)
    seed = spec.seed % 2**32
    if spec.kind == TREE:
        cls = DecisionTreeClassifier if task.is_classification else DecisionTreeRegressor
        return _SklearnTree(cls(random_state=seed, **p), n_classes=k)
    cls = RandomForestClassifier if task.is_classification else RandomForestRegressor
    return _SklearnTree(cls(random_state=seed, bootstrap=True, n_jobs=1, **p),
                        n_classes=k)


@dataclass(frozen=True)
class FittedModel:
    spec: LearnerSpec
    task: TaskKind
    estimator: Any

    @property
    def train_scaler(self):
        return self.estimator.mean_, self.estimator.scale_


def fit(spec: LearnerSpec, train_features, train_targets, task: TaskKind) -> FittedModel:
    X = np.asarray(train_features, dtype=float)
    y = np.asarray(train_targets)
    if X.shape[0] < 2:
        raise LearnerError("need at least 2 training samples")
    if task.is_classification and np.unique(y).size < 2:
        raise LearnerError("classification training set holds a single class")
    return FittedModel(spec, task, build(spec, task).fit(X, y))


def predict(model: FittedModel, features) -> np.ndarray:
    """Probability rows for classification, real values for regression."""
    if model.task.is_classification:
        return model.estimator.predict_proba(features)
    return model.estimator.predict(features)
