"""Two-component Gaussian mixture data model.

Labels are uniform on {-1, +1}; features are the class mean times the label
plus independent per-coordinate Gaussian noise.  The per-coordinate
signal-to-noise ratios mu_i / sigma_i drive all the closed-form bounds in
:mod:`l0trunc.bounds`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import STREAM_CHUNK, substream
from .special import normal_sf

__all__ = [
    "GaussianMixture",
    "SnrVector",
    "sample",
    "snr_vector",
    "normalize",
    "bayes_weights",
    "standard_error",
]

_NORMALIZED_TOL = 1e-12


@dataclass(frozen=True)
class GaussianMixture:
    """Class mean ``mu`` and per-coordinate noise deviations ``sigma``."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        sigma = np.array(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.ndim != 1 or mu.shape != sigma.shape:
            raise ValueError(f"mu and sigma must be vectors of equal length, got {mu.shape} and {sigma.shape}")
        if mu.size == 0:
            raise ValueError("model dimension must be at least 1")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("mu and sigma must be finite")
        if np.any(sigma <= 0):
            raise ValueError("all noise deviations must be strictly positive")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def is_normalized(self) -> bool:
        return abs(np.linalg.norm(self.mu / self.sigma) - 1.0) <= _NORMALIZED_TOL


@dataclass(frozen=True)
class SnrVector:
    """Signal-to-noise profile, kept sorted by descending magnitude.

    ``values[i]`` is the i-th largest-|.| SNR entry and ``perm[i]`` its
    coordinate in the original model, so ``values = nu[perm]``.
    """

    nu: np.ndarray
    values: np.ndarray = field(init=False)
    perm: np.ndarray = field(init=False)

    def __post_init__(self):
        nu = np.array(self.nu, dtype=np.float64)
        if nu.ndim != 1 or nu.size == 0:
            raise ValueError(f"SNR vector must be a non-empty vector, got shape {nu.shape}")
        if not np.all(np.isfinite(nu)):
            raise ValueError("SNR vector must be finite")
        perm = np.argsort(-np.abs(nu), kind="stable")
        values = nu[perm]
        for a in (nu, values, perm):
            a.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "perm", perm)

    @property
    def d(self) -> int:
        return self.nu.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.nu))

    def to_original(self, sorted_vals: np.ndarray) -> np.ndarray:
        """Map a vector aligned with ``values`` back to model coordinates."""
        out = np.empty_like(np.asarray(sorted_vals, dtype=np.float64))
        out[self.perm] = sorted_vals
        return out


def snr_vector(model: GaussianMixture) -> np.ndarray:
    """Per-coordinate signal-to-noise ratios mu_i / sigma_i."""
    return model.mu / model.sigma


def normalize(model: GaussianMixture) -> GaussianMixture:
    """Rescale ``mu`` (sigma untouched) so the SNR vector has unit 2-norm."""
    norm = np.linalg.norm(snr_vector(model))
    if norm == 0.0:
        raise ValueError("cannot normalize a model with zero mean vector")
    return GaussianMixture(model.mu / norm, model.sigma)


def bayes_weights(model: GaussianMixture) -> np.ndarray:
    """Weights of the likelihood-ratio-optimal linear classifier, mu_i / sigma_i^2."""
    return model.mu / model.sigma**2


def standard_error(model: GaussianMixture) -> float:
    """Error of the optimal linear classifier with no adversary."""
    return float(normal_sf(np.linalg.norm(snr_vector(model))))


def sample(model: GaussianMixture, n: int, seed: int):
    """Draw ``n`` labelled samples; returns ``(X, y)`` arrays.

    Labels are i.i.d. uniform on {-1, +1} and features are
    ``y * mu + sigma * z`` with standard normal ``z``.  Generation is
    chunked over per-chunk Philox substreams (chunk length
    ``rng.STREAM_CHUNK``) so that parallel producers, splitting on chunk
    boundaries, reproduce the serial stream exactly.
    """
    if n < 1:
        raise ValueError(f"sample count must be at least 1, got {n}")
    d = model.d
    X = np.empty((n, d))
    y = np.empty(n, dtype=np.int64)
    for start in range(0, n, STREAM_CHUNK):
        stop = min(start + STREAM_CHUNK, n)
        rng = substream(seed, start // STREAM_CHUNK)
        c = stop - start
        yc = rng.integers(0, 2, size=c) * 2 - 1
        z = rng.standard_normal((c, d))
        y[start:stop] = yc
        X[start:stop] = yc[:, None] * model.mu + z * model.sigma
    return X, y
