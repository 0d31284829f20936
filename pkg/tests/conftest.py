import os
from pathlib import Path

import numpy as np
import pytest

from l0trunc.datasets import LabeledDataset, load_mnist_pair, split, upscaled_digits

_MNIST_CANDIDATES = [
    os.environ.get("MNIST_DIR", ""),
    "data/mnist",
    str(Path(__file__).parent / "data" / "mnist"),
]


def _find_mnist():
    for base in _MNIST_CANDIDATES:
        if not base:
            continue
        base = Path(base)
        train_i = base / "train-images-idx3-ubyte"
        train_l = base / "train-labels-idx1-ubyte"
        test_i = base / "t10k-images-idx3-ubyte"
        test_l = base / "t10k-labels-idx1-ubyte"
        if train_i.exists() and train_l.exists() and test_i.exists() and test_l.exists():
            return (train_i, train_l, test_i, test_l)
    return None


@pytest.fixture(scope="session")
def image_corpus():
    """(train, test) 28x28 image datasets.

    Real MNIST when the canonical IDX files are found (MNIST_DIR or
    ./data/mnist), otherwise the bundled upscaled-digits stand-in split
    1297 / 500.
    """
    found = _find_mnist()
    if found is not None:
        train = load_mnist_pair(found[0], found[1])
        test = load_mnist_pair(found[2], found[3])
        return train, test
    data = upscaled_digits()
    frac_test = 500 / len(data)
    train, _, test = split(data, (1 - frac_test, 0.0, frac_test), seed=20240901)
    return train, test


@pytest.fixture(scope="session")
def small_images(image_corpus) -> LabeledDataset:
    train, _ = image_corpus
    return train.subset(np.arange(min(400, len(train))))
