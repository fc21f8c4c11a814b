import math

import numpy as np
import pytest

from rds import regularizers as R

from oracles import central_difference, gaussian_kl


def test_ratio_penalty():
    assert R.ratio_penalty(0.75, 0.75, 0.9) == 0.0
    assert R.ratio_penalty(0.8, 0.75, 0.9) == pytest.approx(0.045)
    assert R.ratio_penalty(0.1, 0.75, 0.0) == 0.0


def test_ratio_penalty_grad_matches_fd():
    p = np.array([0.9, 0.7, 0.85, 0.6])
    g = R.ratio_penalty_grad(p, 0.75, 0.9)
    fd = central_difference(lambda q: R.ratio_penalty(q.mean(), 0.75, 0.9), p)
    assert np.allclose(g, fd, atol=1e-9)


def test_kl_discrete_values():
    assert R.kl_discrete([0.3, 0.7], [0.3, 0.7]) == 0.0
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert expected == pytest.approx(0.1438, abs=1e-4)
    assert R.kl_discrete([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, abs=1e-12)
    assert R.kl_discrete([0.25, 0.75], [0.5, 0.5]) != pytest.approx(expected, abs=1e-3)


def test_kl_discrete_zero_handling():
    assert R.kl_discrete([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert np.isfinite(R.kl_discrete([0.5, 0.5], [1.0, 0.0]))
    assert R.kl_discrete([0.5, 0.5], [1.0, 0.0]) > 5


@pytest.mark.parametrize("p, q", [([-0.1, 1.1], [0.5, 0.5]), ([0.5, 0.6], [0.5, 0.5]),
                                  ([0.5, 0.5], [1.0])])
def test_kl_discrete_validation(p, q):
    with pytest.raises(ValueError):
        R.kl_discrete(p, q)


def test_kl_discrete_nonnegative_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        assert R.kl_discrete(p, q) >= 0.0
        assert R.kl_discrete(p, p) == 0.0


def test_perez_cruz_same_distribution():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=2000), rng.normal(size=2000)
    assert abs(R.kl_continuous_perez_cruz(a, b)) <= 0.1


@pytest.mark.parametrize("mu2, s2", [(1.0, 1.0), (0.0, 2.0)])
def test_perez_cruz_gaussian_closed_form(mu2, s2):
    truth = gaussian_kl(0.0, 1.0, mu2, s2)
    rng = np.random.default_rng(1)
    est = R.kl_continuous_perez_cruz(rng.normal(size=2000), rng.normal(mu2, s2, size=2000))
    assert abs(est - truth) <= 0.15


def test_gaussian_oracle_values():
    assert gaussian_kl(0, 1, 1, 1) == pytest.approx(0.5)
    assert gaussian_kl(0, 1, 0, 2) == pytest.approx(0.3181, abs=1e-4)


def test_perez_cruz_error_shrinks_with_n():
    truth = gaussian_kl(0.0, 1.0, 1.0, 1.0)

    def mae(n):
        errs = []
        for s in range(20):
            rng = np.random.default_rng(100 + s)
            errs.append(abs(R.kl_continuous_perez_cruz(
                rng.normal(size=n), rng.normal(1.0, 1.0, size=n)) - truth))
        return np.mean(errs)

    assert mae(2000) < mae(200)


def test_perez_cruz_insufficient_samples():
    with pytest.raises(ValueError):
        R.kl_continuous_perez_cruz([1.0], [1.0, 2.0])


def test_perez_cruz_k_neighbours():
    rng = np.random.default_rng(2)
    est = R.kl_continuous_perez_cruz(rng.normal(size=1500), rng.normal(1.0, 1.0, size=1500), k=3)
    assert abs(est - 0.5) <= 0.15


def test_iid_penalty_uniform_probs_zero():
    y = np.array([0, 0, 1, 1, 1, 2])
    assert R.iid_penalty_soft(np.full(6, 0.7), y, 3, psi=1.0) == pytest.approx(0.0, abs=1e-12)


def test_iid_penalty_concentrated_is_large():
    y = np.array([0, 0, 0, 1, 1, 1])
    pi = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    assert R.iid_penalty_soft(pi, y, 2, psi=1.0) > 1.0


def test_iid_penalty_zero_scale():
    y = np.array([0, 1, 0, 1])
    assert R.iid_penalty_soft(np.array([0.9, 0.1, 0.2, 0.8]), y, 2, psi=0.0) == 0.0


def test_iid_penalty_grad_matches_fd():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 3, 12)
    pi = rng.uniform(0.1, 0.9, 12)
    g = R.iid_penalty_soft_grad(pi, y, 3, psi=0.7)
    fd = central_difference(lambda q: R.iid_penalty_soft(q, y, 3, psi=0.7), pi)
    rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
    assert np.max(rel) <= 1e-5


def test_iid_direction_is_test_given_train():
    y = np.array([0, 0, 0, 1])
    pi = np.array([0.9, 0.9, 0.2, 0.5])
    p_train, p_test = R.soft_class_masses(pi, y, 2)
    assert R.iid_penalty_soft(pi, y, 2, 1.0) == pytest.approx(
        R.kl_discrete(p_test, p_train), rel=1e-6)
