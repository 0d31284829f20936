"""Dataset containers and on-disk formats.

Three formats live here: the classic big-endian IDX containers used by the
MNIST distribution, a little-endian binary format for synthetic mixture
datasets (with a text sidecar recording the generating parameters), and
plain CSV emission used by the command-line tools.

Pixel features are mapped into the symmetric range [-a, a] by
``v -> a (v / 127.5 - 1)``, which sends 0 to -a and 255 to +a exactly.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .rng import substream

__all__ = [
    "LabeledDataset",
    "IdxFormatError",
    "load_idx_images",
    "load_idx_labels",
    "load_mnist_pair",
    "normalize_pixels",
    "split",
    "save_synthetic",
    "load_synthetic",
    "upscaled_digits",
]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801
_MAX_DIM = 2**31


class IdxFormatError(ValueError):
    """The file is not a well-formed IDX container."""


@dataclass(frozen=True)
class LabeledDataset:
    """Dense features in [-a, a] with integer labels."""

    features: np.ndarray
    labels: np.ndarray
    a: float = 1.0
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"features {X.shape} and labels {y.shape} do not pair up")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if np.any(np.abs(X) > self.a + 1e-12):
            raise ValueError(f"features exceed the declared range [-{self.a}, {self.a}]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx], self.labels[idx], self.a, self.provenance)


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic: int, n_dims: int):
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4 + 4 * n_dims)
        if len(header) < 4 + 4 * n_dims:
            raise IdxFormatError(f"{path}: file too short for an IDX header")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != expected_magic:
            raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        dims = struct.unpack(f">{n_dims}I", header[4:])
        if any(v >= _MAX_DIM for v in dims):
            raise IdxFormatError(f"{path}: dimension overflow in header {dims}")
        count = 1
        for v in dims:
            count *= v
        payload = fh.read(count)
        if len(payload) != count:
            raise IdxFormatError(f"{path}: truncated payload, expected {count} bytes, found {len(payload)}")
        return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_images(path) -> np.ndarray:
    """Raw (n, rows, cols) uint8 tensor from an IDX image file."""
    return _read_idx(path, _IMAGE_MAGIC, 3)


def load_idx_labels(path) -> np.ndarray:
    """Raw (n,) uint8 label vector from an IDX label file."""
    return _read_idx(path, _LABEL_MAGIC, 1)


def normalize_pixels(raw: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Map uint8 pixels into [-a, a] and flatten each image to a row."""
    if a <= 0:
        raise ValueError(f"half-range must be positive, got {a}")
    raw = np.asarray(raw)
    flat = raw.reshape(raw.shape[0], -1).astype(np.float64)
    return a * (flat / 127.5 - 1.0)


def load_mnist_pair(images_path, labels_path, a: float = 1.0, provenance: str = "mnist") -> LabeledDataset:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image file holds {images.shape[0]} records but label file holds {labels.shape[0]}"
        )
    return LabeledDataset(normalize_pixels(images, a), labels.astype(np.int64), a, provenance)


def split(dataset: LabeledDataset, fractions, seed: int):
    """Label-stratified split into len(fractions) disjoint parts.

    Per-class allocations use largest-remainder rounding, so each part's
    class proportions match the global ones to within one sample.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if abs(fractions.sum() - 1.0) > 1e-9 or np.any(fractions < 0):
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    parts = [[] for _ in fractions]
    rng = substream(seed)
    for cls in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == cls)
        idx = idx[rng.permutation(len(idx))]
        quota = fractions * len(idx)
        counts = np.floor(quota).astype(int)
        rem = len(idx) - counts.sum()
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:rem]] += 1
        start = 0
        for p, c in enumerate(counts):
            parts[p].append(idx[start : start + c])
            start += c
    out = []
    for chunk in parts:
        idx = np.sort(np.concatenate(chunk)) if chunk else np.empty(0, dtype=np.int64)
        out.append(dataset.subset(idx))
    return tuple(out)


# ---------------------------------------------------------------------------
# Synthetic mixture datasets: "<u4 d, <u4 n" header then n records of d
# little-endian float64 features and one int8 label (+1 / -1), plus a text
# sidecar with the generating parameters.
# ---------------------------------------------------------------------------


def save_synthetic(path, X, y, mu, sigma, seed: int) -> None:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    record = np.zeros(n, dtype=np.dtype([("x", "<f8", (d,)), ("y", "i1")]))
    record["x"] = X
    record["y"] = y
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", d, n))
        fh.write(record.tobytes())
    with open(str(path) + ".meta", "w") as fh:
        fh.write(f"mu={','.join(repr(float(v)) for v in mu)}\n")
        fh.write(f"sigma={','.join(repr(float(v)) for v in sigma)}\n")
        fh.write(f"seed={int(seed)}\n")


def load_synthetic(path):
    """Returns ``(X, y, meta)`` with meta holding mu, sigma and seed."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise IdxFormatError(f"{path}: too short for a synthetic header")
        d, n = struct.unpack("<II", head)
        record = np.dtype([("x", "<f8", (d,)), ("y", "i1")])
        payload = fh.read(record.itemsize * n)
        if len(payload) != record.itemsize * n:
            raise IdxFormatError(f"{path}: truncated synthetic payload")
        data = np.frombuffer(payload, dtype=record)
    meta = {}
    with open(str(path) + ".meta") as fh:
        for line in fh:
            key, _, val = line.strip().partition("=")
            if key in ("mu", "sigma"):
                meta[key] = np.array([float(v) for v in val.split(",")])
            elif key == "seed":
                meta[key] = int(val)
    return data["x"].copy(), data["y"].astype(np.int64), meta


def upscaled_digits(a: float = 1.0) -> LabeledDataset:
    """Offline 28x28 stand-in corpus built from the bundled digits data.

    Each 8x8 handwritten digit is intensity-scaled to [0, 255], pixel
    tripled to 24x24 and zero-padded to 28x28, giving a 784-dimensional
    ten-class image dataset with no network access.  Used by the
    experiment suites whenever real MNIST files are not on disk.
    """
    from sklearn.datasets import load_digits

    bundle = load_digits()
    imgs = (bundle.images / 16.0 * 255.0).round().astype(np.uint8)
    big = np.repeat(np.repeat(imgs, 3, axis=1), 3, axis=2)
    padded = np.zeros((big.shape[0], 28, 28), dtype=np.uint8)
    padded[:, 2:26, 2:26] = big
    return LabeledDataset(
        normalize_pixels(padded, a), bundle.target.astype(np.int64), a, provenance="digits-upscaled"
    )
