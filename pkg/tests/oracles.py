"""Slow, obviously-correct reference implementations used by the tests."""
import itertools
import math

import numpy as np


def auc_pairs(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    credit = 0.0
    for p, n in itertools.product(pos, neg):
        if p > n:
            credit += 1.0
        elif p == n:
            credit += 0.5
    return credit / (len(pos) * len(neg))


def micro_f1_confusion(labels, predictions):
    classes = sorted(set(labels) | set(predictions))
    tp = fp = fn = 0
    for c in classes:
        for l, p in zip(labels, predictions):
            tp += (l == c and p == c)
            fp += (l != c and p == c)
            fn += (l == c and p != c)
    return 2 * tp / (2 * tp + fp + fn)


def accuracy(labels, predictions):
    return sum(l == p for l, p in zip(labels, predictions)) / len(labels)


def r2_definition(targets, predictions):
    mean = sum(targets) / len(targets)
    ss_res = sum((t - p) ** 2 for t, p in zip(targets, predictions))
    ss_tot = sum((t - mean) ** 2 for t in targets)
    return 1 - ss_res / ss_tot


def gaussian_kl(mu1, s1, mu2, s2):
    """KL(N(mu1, s1^2) || N(mu2, s2^2))."""
    return math.log(s2 / s1) + (s1 ** 2 + (mu1 - mu2) ** 2) / (2 * s2 ** 2) - 0.5


def central_difference(f, x, h=1e-5):
    """Gradient of scalar f at array x by central differences."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (f(up) - f(down)) / (2 * h)
    return grad


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def gru_step_by_hand(h, x, W, U, b, V, c):
    """Scalar-loop GRU cell and Train probability, no matrix ops."""
    H = len(h)
    E = len(x)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    r = [sig(sum(x[i] * W["r"][i][j] for i in range(E))
             + sum(h[i] * U["r"][i][j] for i in range(H)) + b["r"][j]) for j in range(H)]
    z = [sig(sum(x[i] * W["z"][i][j] for i in range(E))
             + sum(h[i] * U["z"][i][j] for i in range(H)) + b["z"][j]) for j in range(H)]
    n = [math.tanh(sum(x[i] * W["n"][i][j] for i in range(E))
                   + sum(r[i] * h[i] * U["n"][i][j] for i in range(H)) + b["n"][j])
         for j in range(H)]
    new = [(1 - z[j]) * n[j] + z[j] * h[j] for j in range(H)]
    l0 = sum(new[j] * V[j][0] for j in range(H)) + c[0]
    l1 = sum(new[j] * V[j][1] for j in range(H)) + c[1]
    p = math.exp(l0) / (math.exp(l0) + math.exp(l1))
    return new, p
