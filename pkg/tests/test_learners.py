import itertools

import numpy as np
import pytest

from rds import learners as L
from rds.dataset import TaskKind

from oracles import central_difference, relative_error

BIN = TaskKind.binary()
REG = TaskKind.regression()


def separable():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [3, 3], [3, 4], [4, 3], [4, 4]], float)
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return X, y


def test_logistic_separable():
    X, y = separable()
    model = L.fit(L.LearnerSpec("logistic"), X, y, BIN)
    assert np.mean(np.argmax(L.predict(model, X), axis=1) == y) == 1.0


def test_ridge_exact_line():
    X = np.arange(1.0, 9.0)[:, None]
    model = L.fit(L.LearnerSpec("ridge", {"alpha": 0.0}), X, 2 * X[:, 0], REG)
    assert model.estimator.coef_[0] == pytest.approx(2.0, abs=1e-8)
    assert L.predict(model, [[3.0]])[0] == pytest.approx(6.0, abs=1e-6)


def best_stump_accuracy(X, y):
    """Enumerate every axis-aligned depth-1 split and both leaf labelings."""
    best = 0.0
    for j in range(X.shape[1]):
        for t in np.unique(X[:, j]):
            left = X[:, j] <= t
            for a, b in itertools.product([0, 1], repeat=2):
                pred = np.where(left, a, b)
                best = max(best, np.mean(pred == y))
    return best


def test_depth_one_tree_on_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 2, float)
    y = np.array([0, 1, 1, 0] * 2)
    oracle = best_stump_accuracy(X, y)
    assert oracle <= 0.75
    model = L.fit(L.LearnerSpec("tree", {"max_depth": 1, "min_samples_leaf": 1}), X, y, BIN)
    acc = np.mean(np.argmax(L.predict(model, X), axis=1) == y)
    assert acc <= oracle


@pytest.mark.parametrize("kind", ["logistic", "tree", "forest", "mlp"])
def test_classifier_rows_sum_to_one_and_deterministic(kind):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0).astype(int)
    spec = L.LearnerSpec(kind, seed=7)
    a = L.fit(spec, X, y, BIN)
    b = L.fit(spec, X, y, BIN)
    pa, pb = L.predict(a, X), L.predict(b, X)
    assert np.allclose(pa.sum(axis=1), 1.0, atol=1e-9)
    assert pa.tobytes() == pb.tobytes()
    assert L.predict(a, X).tobytes() == pa.tobytes()


@pytest.mark.parametrize("kind", ["ridge", "tree", "forest", "mlp"])
def test_regressors_deterministic(kind):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 2))
    y = X @ [1.0, -2.0] + 0.1 * rng.normal(size=30)
    spec = L.LearnerSpec(kind, seed=3)
    pa = L.predict(L.fit(spec, X, y, REG), X)
    pb = L.predict(L.fit(spec, X, y, REG), X)
    assert pa.shape == (30,) and pa.tobytes() == pb.tobytes()


def test_missing_class_keeps_full_width():
    X = np.arange(12.0).reshape(6, 2)
    y = np.array([0, 1, 0, 1, 0, 1])
    model = L.fit(L.LearnerSpec("tree"), X, y, TaskKind.multiclass(3))
    assert L.predict(model, X).shape == (6, 3)


def test_single_class_rejected():
    with pytest.raises(L.LearnerError, match="single class"):
        L.fit(L.LearnerSpec("logistic"), np.zeros((4, 1)), [1, 1, 1, 1], BIN)


def test_too_few_samples():
    with pytest.raises(L.LearnerError):
        L.fit(L.LearnerSpec("ridge"), np.zeros((1, 1)), [1.0], REG)


def test_dimension_mismatch():
    X, y = separable()
    model = L.fit(L.LearnerSpec("logistic"), X, y, BIN)
    with pytest.raises(ValueError, match="features"):
        L.predict(model, np.zeros((2, 3)))


def test_task_support():
    with pytest.raises(ValueError):
        L.build(L.LearnerSpec("logistic"), REG)
    with pytest.raises(ValueError):
        L.build(L.LearnerSpec("ridge"), BIN)


def test_unknown_hyperparameter():
    with pytest.raises(ValueError, match="unknown"):
        L.LearnerSpec("tree", {"depth": 3})


def test_scaler_fit_on_train_only():
    X, y = separable()
    model = L.fit(L.LearnerSpec("logistic"), X, y, BIN)
    mean, scale = model.train_scaler
    assert np.allclose(mean, X.mean(axis=0)) and np.allclose(scale, X.std(axis=0))


@pytest.mark.parametrize("classifier", [True, False])
def test_mlp_gradient_matches_finite_differences(classifier):
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(6, 3))
    net = L.MLPNetwork(hidden=5, n_classes=3 if classifier else None)
    T = np.eye(3)[rng.integers(0, 3, 6)] if classifier else rng.normal(size=(6, 1))
    flat, params = net.init_params(3, T.shape[1], rng)
    params["b1"][...] = rng.normal(size=5) * 0.1
    _, grads = net.loss_and_grad(params, Z, T)
    for name in params:
        def f(v, name=name):
            saved = params[name].copy()
            params[name][...] = v
            loss, _ = net.loss_and_grad(params, Z, T)
            params[name][...] = saved
            return loss
        fd = central_difference(f, params[name].copy())
        assert relative_error(grads[name], fd) <= 1e-4, name


def test_forest_seed_controls_bootstrap():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 4))
    y = (X[:, 0] > 0).astype(int)
    a = L.predict(L.fit(L.LearnerSpec("forest", seed=1), X, y, BIN), X)
    b = L.predict(L.fit(L.LearnerSpec("forest", seed=2), X, y, BIN), X)
    assert not np.array_equal(a, b)
