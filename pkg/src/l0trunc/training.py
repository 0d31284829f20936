"""Adversarial training with periodic regeneration of the adversarial set.

On every regeneration epoch (0, R, 2R, ...) the adversarial set is
discarded and rebuilt by attacking the clean training data against a
frozen snapshot of the current network; each epoch then trains on the
clean and adversarial pools shuffled together.  Adversarial examples keep
their clean labels.  With no attack budget the loop reduces to plain
training and consumes the identical random stream, so the plainly and
"adversarially with attack disabled" trained networks match exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .attacks import AttackBudget, generate_adv_set
from .network import FeedForwardNet, TrainConfig, backward, cross_entropy, sgd_step
from .rng import substream

__all__ = ["EpochStats", "History", "adversarial_train", "train"]

# substream namespaces within the training seed
_NS_SHUFFLE = 1
_NS_REGEN = 2


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    clean_loss: float
    clean_acc: float
    adv_set_size: int
    lr: float


@dataclass
class History:
    rows: list[EpochStats]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "clean_loss", "clean_acc", "adv_set_size", "lr"])
            for r in self.rows:
                writer.writerow([r.epoch, f"{r.clean_loss:.10g}", f"{r.clean_acc:.10g}", r.adv_set_size, f"{r.lr:.10g}"])


def adversarial_train(
    net: FeedForwardNet,
    X,
    Y,
    budget: AttackBudget | None,
    config: TrainConfig,
    jobs: int = 1,
) -> History:
    """Train ``net`` in place; returns the per-epoch history.

    ``budget`` is the regeneration attack budget, or None to disable the
    adversary entirely.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("training set must be non-empty")
    if budget is not None and config.regen_period > config.epochs:
        raise ValueError("regeneration period exceeds the epoch count")
    X_adv = np.empty((0, X.shape[1]))
    Y_adv = np.empty(0, dtype=np.int64)
    rows = []
    for epoch in range(config.epochs):
        if budget is not None and epoch % config.regen_period == 0:
            # the attack runs against a frozen view of the current weights
            X_adv, Y_adv = generate_adv_set(
                X, Y, net, budget.k, budget.t,
                seed=int(substream(config.seed, _NS_REGEN, epoch).integers(2**63)),
                beta=budget.beta, a=budget.a, jobs=jobs,
            )
        pool_X = np.concatenate([X, X_adv], axis=0) if len(X_adv) else X
        pool_Y = np.concatenate([Y, Y_adv]) if len(X_adv) else Y
        order = substream(config.seed, _NS_SHUFFLE, epoch).permutation(len(pool_X))
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            grads = backward(net, pool_X[idx], pool_Y[idx])
            sgd_step(net, grads, config, epoch)
        clean_loss = cross_entropy(net, X, Y)
        clean_acc = float((net.predict(X) == Y).mean())
        rows.append(EpochStats(epoch, clean_loss, clean_acc, len(X_adv), config.learning_rate(epoch)))
    return History(rows)


def train(net: FeedForwardNet, X, Y, config: TrainConfig, jobs: int = 1) -> History:
    """Plain training: adversarial training with the attack disabled."""
    return adversarial_train(net, X, Y, None, config, jobs=jobs)
