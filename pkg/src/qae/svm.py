"""Linear soft-margin SVM trained with Pegasos sub-gradient steps."""
from __future__ import annotations

import numba
import numpy as np

LAMBDA = 1e-3
PASSES = 1000


@numba.njit(cache=True)
def _pegasos(x, y, lam, order):
    n_pass, n = order.shape
    d = x.shape[1]
    w = np.zeros(d)
    t = 0
    for p in range(n_pass):
        for k in range(n):
            i = order[p, k]
            t += 1
            eta = 1.0 / (lam * t)
            margin = 0.0
            for j in range(d):
                margin += w[j] * x[i, j]
            shrink = 1.0 - eta * lam
            if y[i] * margin < 1.0:
                for j in range(d):
                    w[j] = shrink * w[j] + eta * y[i] * x[i, j]
            else:
                for j in range(d):
                    w[j] = shrink * w[j]
    return w


def pegasos(x, y, lam: float = LAMBDA, passes: int = PASSES, seed: int = 0):
    """Hinge-loss linear classifier; returns ``(w, b)`` for ``sign(w·x + b)``.

    The offset is learned through a constant feature, so it is regularised
    together with the weights.  ``y`` must be in {-1, +1}.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("pegasos expects x of shape (N, d) and N labels, N >= 1")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    rng = np.random.default_rng(seed)
    order = np.stack([rng.permutation(x.shape[0]) for _ in range(passes)])
    w = _pegasos(xa, y, float(lam), order)
    return w[:-1], float(w[-1])


class OneVsRest:
    """Multi-class linear classifier built from one Pegasos model per class."""

    def __init__(self, lam: float = LAMBDA, passes: int = PASSES, seed: int = 0):
        self.lam, self.passes, self.seed = lam, passes, seed
        self.classes_ = None
        self.weights_ = None
        self.offsets_ = None

    def fit(self, x, labels):
        labels = np.asarray(labels)
        self.classes_ = np.unique(labels)
        ws, bs = [], []
        for c in self.classes_:
            w, b = pegasos(x, np.where(labels == c, 1.0, -1.0), self.lam, self.passes, self.seed)
            ws.append(w)
            bs.append(b)
        self.weights_, self.offsets_ = np.array(ws), np.array(bs)
        return self

    def decision_function(self, x):
        return np.asarray(x, dtype=float) @ self.weights_.T + self.offsets_

    def predict(self, x):
        return self.classes_[np.argmax(self.decision_function(x), axis=1)]
