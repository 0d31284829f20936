"""Feed-forward classifiers with an optionally truncated first layer.

Plain fully connected stacks with ReLU between layers and softmax at the
output.  When the truncation parameter k is positive, the first layer
computes row-wise truncated products instead of a matrix product (biases
added after truncation); every later layer is unchanged.  Gradients are
computed manually; the first-layer subgradient is straight-through on the
surviving coordinates and exactly zero on dropped ones, with the survivor
mask recomputed on every forward pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import substream
from .truncation import (
    DimensionMismatch,
    check_truncation,
    removed_to_keep,
    truncated_matvec_batch,
)

__all__ = [
    "TrainConfig",
    "FeedForwardNet",
    "Gradients",
    "init_net",
    "forward",
    "predict",
    "backward",
    "sgd_step",
    "cross_entropy",
    "finite_difference_check",
    "save_model",
    "load_model",
    "MNIST_DIMS",
    "REDUCED_DIMS",
]

# Reference architecture for 28x28 grayscale images, and the desk-scale
# preset used by the fast experiments and tests.
MNIST_DIMS = (784, 1568, 3136, 500, 100, 10)
REDUCED_DIMS = (784, 256, 128, 10)

# number of (sample, neuron, input) products processed per backward chunk
_CHUNK_ELEMS = 8_000_000


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by all training loops."""

    batch_size: int = 256
    epochs: int = 250
    lr_schedule: tuple[float, ...] = (0.001,)
    lr_period: int = 25
    momentum: float = 0.9
    weight_decay: float = 0.0
    regen_period: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epoch count must be at least 1")
        if not self.lr_schedule or any(r <= 0 for r in self.lr_schedule):
            raise ValueError("learning rates must be positive")
        if self.lr_period < 1:
            raise ValueError("learning-rate period must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ValueError("weight decay must be non-negative")
        if self.regen_period < 1:
            raise ValueError("regeneration period must be at least 1")
        object.__setattr__(self, "lr_schedule", tuple(float(r) for r in self.lr_schedule))

    def learning_rate(self, epoch: int) -> float:
        idx = min(epoch // self.lr_period, len(self.lr_schedule) - 1)
        return self.lr_schedule[idx]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None


@dataclass
class FeedForwardNet:
    """Layer stack; ``k`` applies to layer 1 only."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    k: int = 0
    vel_weights: list[np.ndarray] = field(default_factory=list)
    vel_biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("need matching weight and bias lists")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise DimensionMismatch(f"layer {l}: weight {W.shape} and bias {b.shape} do not chain")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionMismatch(f"layer {l} expects {W.shape[1]} inputs, previous layer emits {self.weights[l-1].shape[0]}")
        self.k = check_truncation(self.k, self.in_dim)
        if not self.vel_weights:
            self.vel_weights = [np.zeros_like(W) for W in self.weights]
            self.vel_biases = [np.zeros_like(b) for b in self.biases]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.in_dim,) + tuple(W.shape[0] for W in self.weights)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.in_dim:
            raise DimensionMismatch(f"net expects inputs of dimension {self.in_dim}, got {X.shape[1]}")
        if self.k > 0:
            z = truncated_matvec_batch(self.weights[0], X, self.k, bias=self.biases[0])
        else:
            z = X @ self.weights[0].T + self.biases[0]
        for l in range(1, len(self.weights)):
            z = np.maximum(z, 0.0) @ self.weights[l].T + self.biases[l]
        return z

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax breaks ties toward the lowest class index
        return np.argmax(self.logits(X), axis=1)


def init_net(dims, k: int = 0, seed: int = 0) -> FeedForwardNet:
    """Uniform(-r, r) initialization with r = sqrt(6 / (fan_in + fan_out))."""
    dims = tuple(int(v) for v in dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    weights, biases = [], []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        r = np.sqrt(6.0 / (fan_in + fan_out))
        rng = substream(seed, l)
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FeedForwardNet(weights=weights, biases=biases, k=k)


def forward(net: FeedForwardNet, X: np.ndarray) -> np.ndarray:
    """Class-probability rows (softmax of the logits)."""
    z = net.logits(X)
    return _softmax(z)


def predict(net: FeedForwardNet, X: np.ndarray) -> np.ndarray:
    return net.predict(X)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(net: FeedForwardNet, X, Y) -> float:
    """Mean cross-entropy of integer labels, computed in log space."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.int64)
    logp = _log_softmax(net.logits(X))
    return float(-logp[np.arange(len(Y)), Y].mean())


def backward(net: FeedForwardNet, X, Y, want_input_grad: bool = False) -> Gradients:
    """Mean cross-entropy gradient over a batch of integer-labelled inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    if Y.shape != (n,):
        raise DimensionMismatch(f"labels have shape {Y.shape}, expected ({n},)")

    # forward with cached pre-activations
    acts = [X]
    if net.k > 0:
        z, removed = truncated_matvec_batch(net.weights[0], X, net.k, bias=net.biases[0], return_removed=True)
    else:
        z = X @ net.weights[0].T + net.biases[0]
        removed = None
    pres = [z]
    for l in range(1, len(net.weights)):
        a = np.maximum(z, 0.0)
        acts.append(a)
        z = a @ net.weights[l].T + net.biases[l]
        pres.append(z)

    probs = _softmax(z)
    delta = probs
    delta[np.arange(n), Y] -= 1.0
    delta /= n

    L = len(net.weights)
    dW: list[np.ndarray | None] = [None] * L
    db: list[np.ndarray | None] = [None] * L
    for l in range(L - 1, 0, -1):
        dW[l] = delta.T @ acts[l]
        db[l] = delta.sum(axis=0)
        da = delta @ net.weights[l]
        delta = da * (pres[l - 1] > 0.0)

    db[0] = delta.sum(axis=0)
    if net.k == 0:
        dW[0] = delta.T @ X
        dX = delta @ net.weights[0] if want_input_grad else None
    else:
        # gradient flows only through surviving coordinates; dropped ones
        # get exactly zero in both the weights and the input
        m, d = net.weights[0].shape
        dW0 = np.zeros((m, d))
        dX = np.zeros((n, d)) if want_input_grad else None
        step = max(1, _CHUNK_ELEMS // (m * d))
        for s in range(0, n, step):
            e = min(s + step, n)
            keep = removed_to_keep(removed[s:e], d)
            masked = keep * X[s:e, None, :]
            dW0 += np.einsum("nm,nmd->md", delta[s:e], masked)
            if want_input_grad:
                dX[s:e] = np.einsum("nm,md,nmd->nd", delta[s:e], net.weights[0], keep)
        dW[0] = dW0
    return Gradients(weights=dW, biases=db, inputs=dX)


def sgd_step(net: FeedForwardNet, grads: Gradients, config: TrainConfig, epoch: int) -> FeedForwardNet:
    """Classic momentum update: v <- m v - lr (g + wd theta); theta <- theta + v."""
    lr = config.learning_rate(epoch)
    for W, b, gW, gb, vW, vb in zip(
        net.weights, net.biases, grads.weights, grads.biases, net.vel_weights, net.vel_biases
    ):
        if gW.shape != W.shape or gb.shape != b.shape:
            raise DimensionMismatch("gradient shapes do not match the network")
        vW *= config.momentum
        vW -= lr * (gW + config.weight_decay * W)
        W += vW
        vb *= config.momentum
        vb -= lr * (gb + config.weight_decay * b)
        b += vb
    return net


def _first_layer_removed(net: FeedForwardNet, X: np.ndarray):
    if net.k == 0:
        return None
    _, removed = truncated_matvec_batch(net.weights[0], X, net.k, return_removed=True)
    return removed


def finite_difference_check(net: FeedForwardNet, X, Y, h: float = 1e-5):
    """Compare analytic gradients against central differences.

    First-layer weight entries whose perturbation flips any sample's
    survivor mask are skipped (the loss is non-differentiable across a
    mask change).  Returns ``(max_rel_err, checked, skipped)`` where the
    relative error uses ``|num - ana| / max(|num| + |ana|, 1e-8)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.int64)
    grads = backward(net, X, Y)
    base_removed = _first_layer_removed(net, X)
    worst = 0.0
    checked = 0
    skipped = 0
    for l, (W, gW) in enumerate(zip(net.weights, grads.weights)):
        it = np.nditer(W, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = W[idx]
            W[idx] = orig + h
            if l == 0 and net.k > 0 and not np.array_equal(_first_layer_removed(net, X), base_removed):
                W[idx] = orig
                skipped += 1
                continue
            loss_hi = cross_entropy(net, X, Y)
            W[idx] = orig - h
            if l == 0 and net.k > 0 and not np.array_equal(_first_layer_removed(net, X), base_removed):
                W[idx] = orig
                skipped += 1
                continue
            loss_lo = cross_entropy(net, X, Y)
            W[idx] = orig
            num = (loss_hi - loss_lo) / (2.0 * h)
            ana = gW[idx]
            worst = max(worst, abs(num - ana) / max(abs(num) + abs(ana), 1e-8))
            checked += 1
    for b, gb in zip(net.biases, grads.biases):
        for i in range(b.size):
            orig = b[i]
            b[i] = orig + h
            loss_hi = cross_entropy(net, X, Y)
            b[i] = orig - h
            loss_lo = cross_entropy(net, X, Y)
            b[i] = orig
            num = (loss_hi - loss_lo) / (2.0 * h)
            worst = max(worst, abs(num - gb[i]) / max(abs(num) + abs(gb[i]), 1e-8))
            checked += 1
    return worst, checked, skipped


# ---------------------------------------------------------------------------
# Serialization: little-endian binary, magic + version + dims + k, then
# row-major float64 weights followed by biases, layer by layer.
# ---------------------------------------------------------------------------

_MAGIC = b"TFFN"
_VERSION = 1


def save_model(net: FeedForwardNet, path) -> None:
    dims = net.dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQ", _VERSION, len(dims), net.k))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for W, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> FeedForwardNet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a model file: expected magic {_MAGIC!r}, found {magic!r}")
        version, n_dims, k = struct.unpack("<IIQ", fh.read(16))
        if version != _VERSION:
            raise ValueError(f"unsupported model version {version}")
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        weights, biases = [], []
        for l in range(n_dims - 1):
            m, d = dims[l + 1], dims[l]
            W = np.frombuffer(fh.read(8 * m * d), dtype="<f8").reshape(m, d).copy()
            b = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
            if W.size != m * d or b.size != m:
                raise ValueError("model file is truncated")
            weights.append(W)
            biases.append(b)
        return FeedForwardNet(weights=weights, biases=biases, k=int(k))
