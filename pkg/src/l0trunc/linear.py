"""Truncated linear classifiers over {-1, +1} labels.

``sign(truncated inner product)`` with the strict convention that a zero
score maps to -1.  Fitting minimizes the logistic surrogate of the margin
by minibatch SGD with momentum; an optional adversary callable supplies
perturbed copies of the training data that are pooled in, regenerated on
the configured period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import TrainConfig
from .rng import substream
from .truncation import check_truncation, removed_to_keep, truncated_row_sums

__all__ = ["TruncatedLinearClassifier", "fit_truncated_linear"]


@dataclass(frozen=True)
class TruncatedLinearClassifier:
    w: np.ndarray
    k: int = 0

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError(f"weights must be a vector, got shape {w.shape}")
        if not np.any(w):
            raise ValueError("weights must be nonzero")
        check_truncation(self.k, w.shape[0])
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def decision(self, X) -> np.ndarray:
        """Truncated inner-product scores, one per row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.k == 0:
            return X @ self.w
        return truncated_row_sums(X * self.w, self.k)

    def predict(self, X) -> np.ndarray:
        """Labels in {-1, +1}; a zero score counts as -1."""
        return np.where(self.decision(X) > 0.0, 1, -1)

    def logits(self, X) -> np.ndarray:
        """Two-class logit rows (-score, +score); class index = (label+1)/2."""
        v = self.decision(X)
        return np.column_stack([-v, v])

    @staticmethod
    def class_index(y) -> np.ndarray:
        return (np.asarray(y, dtype=np.int64) + 1) // 2


def fit_truncated_linear(
    X,
    y,
    k: int,
    config: TrainConfig,
    adversary=None,
) -> TruncatedLinearClassifier:
    """Fit weights by logistic-loss SGD on the truncated margin.

    ``adversary``, when given, is a callable ``(X, y, seed, clf) -> X'``
    whose output is pooled with the clean data; it is re-invoked every
    ``config.regen_period`` epochs with a snapshot of the current
    classifier (randomized adversaries may ignore it).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if set(np.unique(y)) - {-1, 1}:
        raise ValueError("labels must be -1 or +1")
    n, d = X.shape
    k = check_truncation(k, d)
    rng_init = substream(config.seed, 0)
    w = rng_init.normal(scale=1.0 / np.sqrt(d), size=d)
    vel = np.zeros(d)
    pool_X, pool_y = X, y
    for epoch in range(config.epochs):
        if adversary is not None and epoch % config.regen_period == 0:
            snapshot = TruncatedLinearClassifier(w=w.copy(), k=k)
            Xa = adversary(X, y, config.seed + 7_000_000 + epoch, snapshot)
            pool_X = np.concatenate([X, Xa], axis=0)
            pool_y = np.concatenate([y, y])
        order = substream(config.seed, 1, epoch).permutation(len(pool_X))
        lr = config.learning_rate(epoch)
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            xb, yb = pool_X[idx], pool_y[idx]
            if k == 0:
                scores = xb @ w
                keep = None
            else:
                scores, removed = truncated_row_sums(xb * w, k, return_removed=True)
                keep = removed_to_keep(removed, d)
            margin = yb * scores
            # d/dw of mean log(1 + exp(-margin)), restricted to survivors
            coef = -yb / (1.0 + np.exp(np.clip(margin, -500, 500)))
            contrib = coef[:, None] * xb
            if keep is not None:
                contrib = contrib * keep
            grad = contrib.mean(axis=0) + config.weight_decay * w
            vel = config.momentum * vel - lr * grad
            w = w + vel
    if not np.any(w):
        raise RuntimeError("training collapsed to the zero weight vector")
    return TruncatedLinearClassifier(w=w, k=k)
