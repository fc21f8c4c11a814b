import numpy as np
import pytest
from sklearn.base import clone
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import cross_val_score

from rds import ReinforcedSampler
from rds.validation import check_ratio, infer_task


def blobs(m=40, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array(["no", "yes"] * (m // 2))
    X = rng.normal(size=(m, 3)) + (y == "yes")[:, None]
    return X, y


def small(**kw):
    params = dict(learners=("logistic",), episodes=2, hidden_size=8)
    params.update(kw)
    return ReinforcedSampler(**params)


def test_get_params_and_clone():
    est = small(ratio=0.6)
    assert est.get_params()["ratio"] == 0.6
    assert clone(est).get_params() == est.get_params()


def test_fit_sets_split_and_labels():
    X, y = blobs()
    est = small().fit(X, y)
    assert est.train_mask_.sum() == 30
    assert list(est.classes_) == ["no", "yes"]
    assert est.achieved_ratio_ == 0.75
    assert len(est.episode_logs_) == 2


def test_usable_as_cv_splitter():
    X, y = blobs()
    est = small().fit(X, y)
    (train, test), = list(est.split(X))
    assert len(train) + len(test) == 40 and not set(train) & set(test)
    scores = cross_val_score(LogisticRegression(), X, y, cv=est)
    assert scores.shape == (1,)


def test_sample_new_data():
    X, y = blobs()
    est = small().fit(X, y)
    X2, y2 = blobs(20, seed=1)
    assert est.sample(X2, y2).sum() == 15
    with pytest.raises(ValueError, match="features"):
        est.sample(X2[:, :2], y2)


def test_split_before_fit():
    with pytest.raises(Exception):
        next(small().split())


@pytest.mark.parametrize("bad", [{"ratio": 1.5}, {"episodes": 0}, {"psi": -1.0}])
def test_parameter_validation(bad):
    X, y = blobs()
    with pytest.raises(ValueError):
        small(**bad).fit(X, y)


def test_input_validation():
    X, y = blobs()
    X[0, 0] = np.nan
    with pytest.raises(ValueError):
        small().fit(X, y)
    with pytest.raises(ValueError):
        small().fit(X[:, :2][:3], y[:3])


def test_infer_task():
    assert infer_task([0, 1, 1]).kind == "binary"
    assert infer_task([0, 1, 2]).num_classes == 3
    assert infer_task([0.5, 1.2, 3.0]).kind == "regression"
    assert check_ratio(0.5) == 0.5


def test_fit_predict_returns_mask():
    X, y = blobs()
    mask = small().fit_predict(X, y)
    assert mask.dtype == bool and mask.sum() == 30
