"""Randomized erasure adversary for the Gaussian mixture.

The adversary fixes a coordinate set ``A`` and a real-valued budget
``l1(nu_A) * log d``.  For each coordinate in ``A`` it either keeps the
observed value or erases it to uniform noise on [-1, 1]; the keep
probability is the capped class-likelihood ratio, which makes the
conditional law of the erased block identical under both labels.  If the
number of erasures would exceed the budget (probability at most
``1 / log d``), the input is returned unchanged, so the hard budget holds
with probability one.

The erasure rule implicitly assumes the data lives near [-1, 1]; that is a
modelling convention of this construction, documented but not enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gmm import GaussianMixture, snr_vector
from .rng import substream

__all__ = [
    "AdvConfig",
    "erasure_keep_prob",
    "perturb",
    "perturb_many",
    "change_prob_bound",
    "change_prob_mc",
    "erased_density",
    "conditional_log_density",
    "map_error_lower_mc",
]


@dataclass(frozen=True)
class AdvConfig:
    """Coordinate set ``A`` plus the mixture it attacks."""

    model: GaussianMixture
    A: np.ndarray
    budget: float = field(init=False)

    def __post_init__(self):
        A = np.unique(np.asarray(self.A, dtype=np.int64).reshape(-1))
        if A.size and (A[0] < 0 or A[-1] >= self.model.d):
            raise ValueError(f"coordinate set must lie within [0, {self.model.d})")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        nu = snr_vector(self.model)
        budget = float(np.sum(np.abs(nu[A]))) * math.log(self.model.d)
        object.__setattr__(self, "budget", budget)

    @property
    def complement(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.model.d), self.A, assume_unique=True)


def erasure_keep_prob(x_i, y, mu_i, sigma_i):
    """Probability of keeping coordinate value ``x_i`` under label ``y``.

    The capped likelihood ratio ``min(1, f(x|-y) / f(x|y))``, which for the
    Gaussian mixture is ``exp(-2 x y mu / sigma^2)`` capped at 1.  Values on
    the side of the mean opposite to ``y * mu`` (where the ratio exceeds 1)
    are always kept; erasing them would skew the erased law between labels.
    """
    sigma_i = np.asarray(sigma_i, dtype=np.float64)
    if np.any(sigma_i <= 0):
        raise ValueError("sigma must be strictly positive")
    arg = -2.0 * np.asarray(x_i, dtype=np.float64) * y * mu_i / sigma_i**2
    out = np.where(arg >= 0.0, 1.0, np.exp(np.minimum(arg, 0.0)))
    return float(out) if out.ndim == 0 else out


def change_prob_bound(nu_i: float) -> float:
    """Cap on the per-coordinate erasure probability: min(sqrt(2/pi)|nu|, 1)."""
    if not math.isfinite(nu_i):
        raise ValueError("SNR value must be finite")
    return min(math.sqrt(2.0 / math.pi) * abs(nu_i), 1.0)


def perturb(x, y: int, cfg: AdvConfig, seed: int) -> np.ndarray:
    """Apply the randomized erasure to one labelled sample."""
    x = np.asarray(x, dtype=np.float64)
    return perturb_many(x[None, :], np.array([y]), cfg, seed)[0]


def perturb_many(X, y, cfg: AdvConfig, seed: int) -> np.ndarray:
    """Vectorized :func:`perturb` over rows of ``X``.

    One atomic draw block per call, deterministic for a given seed; callers
    running trials in parallel split them across per-chunk seeds.  The
    number of changed coordinates is asserted against the budget on every
    call.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] != cfg.model.d:
        raise ValueError(f"expected samples of dimension {cfg.model.d}, got shape {X.shape}")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    A = cfg.A
    out = X.copy()
    if A.size == 0:
        return out
    rng = substream(seed)
    mu_A = cfg.model.mu[A]
    sig_A = cfg.model.sigma[A]
    p_keep = erasure_keep_prob(X[:, A], y[:, None], mu_A, sig_A)
    erase = rng.random(p_keep.shape) < (1.0 - p_keep)
    unif = rng.uniform(-1.0, 1.0, size=p_keep.shape)
    n_erased = erase.sum(axis=1)
    ok = n_erased <= cfg.budget
    rows = np.nonzero(ok)[0]
    block = out[np.ix_(rows, A)]
    sel = erase[rows]
    block[sel] = unif[rows][sel]
    out[np.ix_(rows, A)] = block
    changed = (out != X).sum(axis=1)
    assert np.all(changed <= cfg.budget), "erasure exceeded the hard budget"
    return out


def change_prob_mc(model: GaussianMixture, i: int, trials: int, seed: int) -> float:
    """Monte Carlo estimate of the probability that coordinate ``i`` changes."""
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = substream(seed)
    y = rng.integers(0, 2, size=trials) * 2 - 1
    x = y * model.mu[i] + model.sigma[i] * rng.standard_normal(trials)
    p_keep = erasure_keep_prob(x, y, model.mu[i], model.sigma[i])
    erase = rng.random(trials) < (1.0 - p_keep)
    return float(erase.mean())


def erased_density(z_A, cfg: AdvConfig, alpha) -> float:
    """Density of the erased block, identical under both labels.

    Product over ``A`` of a folded Gaussian tail term (mean shifted by
    |mu_i|) plus ``alpha_i / 2`` on [-1, 1], where ``alpha_i`` is the
    per-coordinate change probability.
    """
    z = np.asarray(z_A, dtype=np.float64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), z.shape)
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise ValueError("change probabilities must lie in [0, 1]")
    A = cfg.A
    if z.shape[-1] != A.size:
        raise ValueError(f"expected {A.size} coordinates, got {z.shape[-1]}")
    mu = np.abs(cfg.model.mu[A])
    sig = cfg.model.sigma[A]
    gauss = np.exp(-((np.abs(z) + mu) ** 2) / (2.0 * sig**2)) / np.sqrt(2.0 * np.pi * sig**2)
    box = 0.5 * alpha * (np.abs(z) <= 1.0)
    return float(np.prod(gauss + box, axis=-1))


def _alpha_closed_form(cfg: AdvConfig) -> np.ndarray:
    # change probability of the capped-ratio rule: 1 - 2 * P(Z > |nu_i|)
    from .special import normal_sf

    nu = np.abs(snr_vector(cfg.model)[cfg.A])
    return 1.0 - 2.0 * np.asarray(normal_sf(nu))


def conditional_log_density(V, y: int, cfg: AdvConfig, alpha=None) -> np.ndarray:
    """Log density of the adversary's idealized output given the label.

    Factorizes as the label-free erased-block density over ``A`` times the
    untouched Gaussian likelihood over the complement.  Rows of ``V`` are
    evaluated independently.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[None, :]
    A = cfg.A
    comp = cfg.complement
    alpha = _alpha_closed_form(cfg) if alpha is None else np.asarray(alpha, dtype=np.float64)
    out = np.zeros(V.shape[0])
    if A.size:
        mu = np.abs(cfg.model.mu[A])
        sig = cfg.model.sigma[A]
        z = V[:, A]
        gauss = np.exp(-((np.abs(z) + mu) ** 2) / (2.0 * sig**2)) / np.sqrt(2.0 * np.pi * sig**2)
        box = 0.5 * alpha * (np.abs(z) <= 1.0)
        out += np.sum(np.log(gauss + box), axis=1)
    if comp.size:
        mu = cfg.model.mu[comp]
        sig = cfg.model.sigma[comp]
        r = (V[:, comp] - y * mu) / sig
        out += np.sum(-0.5 * r * r - np.log(np.sqrt(2.0 * np.pi) * sig), axis=1)
    return out


def map_error_lower_mc(cfg: AdvConfig, trials: int, seed: int) -> float:
    """Monte Carlo floor on any classifier's error under this adversary.

    Estimates the error of the likelihood-comparison (MAP) rule that knows
    the adversary's construction: half the frequency of exact density ties
    plus the frequency, under label +1, of the wrong label scoring strictly
    higher.  No classifier beats the MAP rule, so this certifies a floor.
    """
    if trials < 10_000:
        raise ValueError("need at least 1e4 trials for a meaningful floor")
    from .gmm import sample

    X, y = sample(cfg.model, trials, seed)
    Xp = perturb_many(X, y, cfg, seed + 1)
    log_pos = conditional_log_density(Xp, 1, cfg)
    log_neg = conditional_log_density(Xp, -1, cfg)
    ties = log_pos == log_neg
    wrong = (log_neg > log_pos) & (y == 1)
    return float(0.5 * ties.mean() + wrong.sum() / max((y == 1).sum(), 1))
