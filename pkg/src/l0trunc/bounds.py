"""Closed-form robustness bounds for the Gaussian mixture setting.

Everything here is a deterministic function of the SNR profile, an error
threshold ``eps``, and the dimension ``d``.  The dimension only ever enters
through ``log d`` terms, so it may be passed "symbolically" (much larger
than the length of the SNR vector) to evaluate asymptotic regimes.

Probability-valued bounds are returned as :class:`BoundValue`; values
falling outside [0, 1] are clamped and flagged rather than silently
clipped, because at small ``d`` several of the bounds are vacuous and users
must be able to see that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gmm import GaussianMixture, SnrVector, snr_vector
from .special import normal_sf

__all__ = [
    "WindowError",
    "BoundValue",
    "BudgetBounds",
    "Corrections",
    "normal_sf",
    "head_cutoff",
    "head_length",
    "head_l1_norm",
    "candidate_weights",
    "candidate_classifier_weights",
    "robust_error_upper_bound_general",
    "robust_error_upper_bound_diag",
    "robust_error_lower_bound",
    "loss_bound_at_budget",
    "tolerable_budget_upper",
    "truncated_budget_lower",
    "asymptotic_corrections",
    "eps_shift",
    "budget_bounds",
]

SF_ONE = float(normal_sf(1.0))  # standard error of the normalized model
_NORM_TOL = 1e-9
_BISECT_TOL = 1e-12
_BISECT_MAX_ITER = 200


class WindowError(ValueError):
    """The error threshold lies outside the window an operation requires."""


@dataclass(frozen=True)
class BoundValue:
    """A bound together with clamping / validity metadata."""

    value: float
    raw: float
    clamped: bool = False
    in_window: bool = True


def _clamp_probability(raw: float, in_window: bool = True) -> BoundValue:
    value = min(1.0, max(0.0, raw))
    return BoundValue(value=value, raw=raw, clamped=value != raw, in_window=in_window)


def _log_d(d) -> float:
    d = float(d)
    if not d > 1.0:
        raise ValueError(f"dimension must exceed 1, got {d}")
    return math.log(d)


def _as_snr(nu) -> SnrVector:
    if isinstance(nu, SnrVector):
        return nu
    return SnrVector(np.asarray(nu, dtype=np.float64))


def _checked_snr(nu) -> SnrVector:
    snr = _as_snr(nu)
    if abs(snr.norm - 1.0) > _NORM_TOL:
        raise ValueError(f"SNR vector must have unit 2-norm, got {snr.norm!r}")
    return snr


def head_cutoff(eps: float) -> float:
    """Invert eps = normal_sf(sqrt(1 - c^2)) for c in (0, 1) by bisection.

    Larger thresholds map to larger cutoffs; the bracket is [0, 1] so the
    iteration cannot escape, and it stops once the residual drops below
    1e-12 (at most 200 halvings).
    """
    eps = float(eps)
    if not SF_ONE < eps < 0.5:
        raise WindowError(f"threshold must lie in ({SF_ONE:.6f}, 0.5), got {eps}")
    lo, hi = 0.0, 1.0
    c = 0.5
    for _ in range(_BISECT_MAX_ITER):
        c = 0.5 * (lo + hi)
        resid = float(normal_sf(math.sqrt(1.0 - c * c))) - eps
        if abs(resid) < _BISECT_TOL:
            break
        if resid < 0.0:
            lo = c
        else:
            hi = c
    return c


def head_length(nu, c: float) -> int:
    """Length of the shortest SNR prefix whose 2-norm reaches ``c``.

    The profile is sorted by descending magnitude internally; the result is
    1-based (a prefix of length lambda).
    """
    snr = _checked_snr(nu)
    if not 0.0 < c < 1.0:
        raise ValueError(f"cutoff must lie in (0, 1), got {c}")
    prefix = np.sqrt(np.cumsum(snr.values**2))
    idx = np.nonzero(prefix >= c)[0]
    if idx.size == 0:
        # float slop near c ~ 1; the full prefix always qualifies
        return snr.d
    return int(idx[0]) + 1


def head_l1_norm(nu, eps: float) -> float:
    """1-norm of the SNR head selected by the cutoff at ``eps``."""
    snr = _checked_snr(nu)
    lam = head_length(snr, head_cutoff(eps))
    return float(np.sum(np.abs(snr.values[:lam])))


def candidate_weights(nu, eps: float) -> np.ndarray:
    """Analytical robust weight profile: zero the SNR head, keep the tail.

    Returns the profile aligned with the sorted SNR values (the first
    ``lambda - 1`` entries are zero, the rest equal the SNR values).  The
    squared norm of the result is at least ``1 - c(eps)^2``.
    """
    snr = _checked_snr(nu)
    lam = head_length(snr, head_cutoff(eps))
    w = snr.values.copy()
    w[: lam - 1] = 0.0
    return w


def candidate_classifier_weights(model: GaussianMixture, eps: float) -> np.ndarray:
    """Candidate weights mapped to classifier space in model coordinates."""
    snr = _as_snr(snr_vector(model))
    w_sorted = candidate_weights(snr, eps)
    return snr.to_original(w_sorted) / model.sigma


def robust_error_upper_bound_general(w, mu, Sigma, k, d: int | None = None) -> BoundValue:
    """Robust-error upper bound for a truncated linear classifier, general covariance.

    ``k`` is the attack budget (the formula is continuous, so fractional
    budgets from the theory are accepted).  ``Sigma`` must be positive
    definite.
    """
    w = np.asarray(w, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if w.ndim != 1 or mu.shape != w.shape or Sigma.shape != (w.size, w.size):
        raise ValueError("w, mu must be same-length vectors and Sigma a matching square matrix")
    if not np.any(w):
        raise ValueError("weight vector must be nonzero")
    if k < 0:
        raise ValueError(f"budget must be non-negative, got {k}")
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance matrix must be positive definite") from None
    L = _log_d(w.size if d is None else d)
    diag_half = np.sqrt(np.diag(Sigma))
    inf_term = 8.0 * k * np.max(np.abs(diag_half * w)) * (1.0 + math.sqrt(2.0 * L))
    denom = math.sqrt(float(w @ Sigma @ w))
    arg = (float(w @ mu) - inf_term) / denom
    raw = 1.0 / math.sqrt(2.0 * L) + float(normal_sf(arg))
    return _clamp_probability(raw)


def robust_error_upper_bound_diag(w_tilde, nu, k, d: int | None = None) -> BoundValue:
    """Diagonal-covariance specialization of the robust-error upper bound.

    ``w_tilde`` is the noise-whitened weight vector, aligned coordinatewise
    with ``nu``.
    """
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    nu_arr = _as_snr(nu).nu if isinstance(nu, SnrVector) else np.asarray(nu, dtype=np.float64)
    if w_tilde.shape != nu_arr.shape:
        raise ValueError(f"weight profile shape {w_tilde.shape} does not match SNR shape {nu_arr.shape}")
    if not np.any(w_tilde):
        raise ValueError("weight profile must be nonzero")
    if k < 0:
        raise ValueError(f"budget must be non-negative, got {k}")
    L = _log_d(w_tilde.size if d is None else d)
    inf_term = 8.0 * k * np.max(np.abs(w_tilde)) * (1.0 + math.sqrt(2.0 * L))
    arg = (float(w_tilde @ nu_arr) - inf_term) / float(np.linalg.norm(w_tilde))
    raw = 1.0 / math.sqrt(2.0 * L) + float(normal_sf(arg))
    return _clamp_probability(raw)


def robust_error_lower_bound(nu, A, d: int | None = None):
    """Budget and error floor certified by erasing the coordinate set ``A``.

    Returns ``(budget, BoundValue)``: with budget ``l1(nu_A) * log d`` no
    classifier does better than ``normal_sf(l2(nu_on_complement)) - 1/log d``
    (clamped below at 0).  ``A`` holds 0-based coordinate indices into the
    profile as given.
    """
    nu_arr = nu.nu if isinstance(nu, SnrVector) else np.asarray(nu, dtype=np.float64)
    A = np.asarray(A, dtype=np.int64).reshape(-1)
    dim = nu_arr.size
    if A.size and (A.min() < 0 or A.max() >= dim):
        raise ValueError(f"index set must lie within [0, {dim}), got range [{A.min()}, {A.max()}]")
    if A.size != np.unique(A).size:
        raise ValueError("index set contains duplicates")
    L = _log_d(dim if d is None else d)
    comp = np.setdiff1d(np.arange(dim), A, assume_unique=True)
    budget = float(np.sum(np.abs(nu_arr[A]))) * L
    raw = float(normal_sf(float(np.linalg.norm(nu_arr[comp])))) - 1.0 / L
    return budget, _clamp_probability(raw)


def loss_bound_at_budget(nu, eps: float, a: float, d: int | None = None) -> BoundValue:
    """Robust-error bound when the budget is ``a`` times the SNR head 1-norm.

    Affine increasing in ``a``; at ``a = 0`` it reduces to
    ``eps + 1/sqrt(2 log d)``.
    """
    if a < 0:
        raise ValueError(f"budget fraction must be non-negative, got {a}")
    snr = _checked_snr(nu)
    L = _log_d(snr.d if d is None else d)
    c = head_cutoff(eps)
    raw = (
        eps
        + a * 8.0 * (1.0 + math.sqrt(2.0 * L)) / (math.sqrt(2.0 * math.pi) * math.sqrt(1.0 - c * c))
        + 1.0 / math.sqrt(2.0 * L)
    )
    return _clamp_probability(raw)


def tolerable_budget_upper(nu, eps: float, d: int | None = None, strict: bool = True) -> BoundValue:
    """Upper bound on the budget *any* classifier tolerates at threshold ``eps``.

    Value: ``l1(SNR head at eps) * log d``.  Valid for
    ``normal_sf(1) + 1/log d < eps < 1/2``; with ``strict=False``,
    thresholds at or above 1/2 yield an infinite (vacuous) bound and
    thresholds below the shifted floor are computed but flagged.
    """
    snr = _checked_snr(nu)
    L = _log_d(snr.d if d is None else d)
    eps = float(eps)
    lo = SF_ONE + 1.0 / L
    if eps >= 0.5:
        if strict:
            raise WindowError(f"threshold must be below 0.5, got {eps}")
        return BoundValue(value=math.inf, raw=math.inf, in_window=False)
    if eps <= lo:
        if strict:
            raise WindowError(f"threshold must exceed {lo:.6f}, got {eps}")
        if eps <= SF_ONE:
            return BoundValue(value=math.inf, raw=math.inf, in_window=False)
    value = head_l1_norm(snr, eps) * L
    return BoundValue(value=value, raw=value, in_window=eps > lo)


def truncated_budget_lower(nu, eps: float, d: int | None = None, strict: bool = True) -> BoundValue:
    """Lower bound on the budget truncated linear classifiers tolerate.

    Value: ``sqrt(1 - c(eps)^2)/16 * l1(SNR head at eps) / log d``, a floor
    on the tolerable budget at the threshold ``eps + sqrt(2/log d)``.
    Valid for ``normal_sf(1) < eps < 1/2 - sqrt(2/log d)``; with
    ``strict=False`` thresholds up to 1/2 are computed but flagged.
    """
    snr = _checked_snr(nu)
    L = _log_d(snr.d if d is None else d)
    eps = float(eps)
    hi = 0.5 - math.sqrt(2.0 / L)
    if not SF_ONE < eps < 0.5:
        raise WindowError(f"threshold must lie in ({SF_ONE:.6f}, 0.5), got {eps}")
    if eps >= hi and strict:
        raise WindowError(f"threshold must be below {hi:.6f}, got {eps}")
    c = head_cutoff(eps)
    value = math.sqrt(1.0 - c * c) / 16.0 * head_l1_norm(snr, eps) / L
    return BoundValue(value=value, raw=value, in_window=eps < hi)


class Corrections(NamedTuple):
    c1: float
    c2: float
    in_window: bool


def asymptotic_corrections(eps: float, d, strict: bool = True) -> Corrections:
    """Threshold shift c1 and exponent gap c2 of the optimality guarantee.

    Both vanish as d grows.  c1 depends only on d; c2 additionally needs the
    cutoff at the back-shifted threshold, so it is NaN (and flagged) when
    that threshold leaves (normal_sf(1), 1/2).
    """
    L = _log_d(d)
    eps = float(eps)
    c1 = 1.0 / L + math.sqrt(2.0 / L)
    lo = SF_ONE + c1
    in_window = lo < eps < 0.5
    if strict and not in_window:
        raise WindowError(f"threshold must lie in ({lo:.6f}, 0.5), got {eps}")
    shifted = eps - math.sqrt(2.0 / L)
    if SF_ONE < shifted < 0.5:
        c = head_cutoff(shifted)
        c2 = 2.0 * math.log(L) / L - math.log(math.sqrt(1.0 - c * c) / 16.0) / L
    else:
        c2 = math.nan
    return Corrections(c1=c1, c2=c2, in_window=in_window)


def eps_shift(d) -> float:
    """Threshold shift pairing the two budget bounds: sqrt(2/log d) + 1/log d."""
    L = _log_d(d)
    return math.sqrt(2.0 / L) + 1.0 / L


@dataclass(frozen=True)
class BudgetBounds:
    """One evaluated row of the budget-bound curves."""

    eps: float
    d: float
    cutoff: float
    head_len: int
    k_trunc_lb: float
    k_star_ub: float
    alpha_trunc_lb: float
    alpha_star_ub: float
    c1: float
    c2: float
    in_window: bool
    sandwich_ok: bool


def budget_bounds(nu, eps: float, d: int | None = None) -> BudgetBounds:
    """Evaluate every budget bound at one threshold, flags instead of errors.

    ``sandwich_ok`` records whether the truncated-family floor stays below
    the any-classifier ceiling evaluated at the shifted threshold (holds
    automatically when the ceiling is vacuous).
    """
    snr = _checked_snr(nu)
    dv = float(snr.d if d is None else d)
    L = _log_d(dv)
    cutoff = head_cutoff(eps)
    lam = head_length(snr, cutoff)
    lb = truncated_budget_lower(snr, eps, d=dv, strict=False)
    ub = tolerable_budget_upper(snr, eps, d=dv, strict=False)
    ub_shifted = tolerable_budget_upper(snr, min(eps + eps_shift(dv), 1.0), d=dv, strict=False)
    corr = asymptotic_corrections(eps, dv, strict=False)

    def _alpha(k: float) -> float:
        if not math.isfinite(k) or k <= 0.0:
            return math.nan
        return math.log(k) / math.log(dv)

    return BudgetBounds(
        eps=float(eps),
        d=dv,
        cutoff=cutoff,
        head_len=lam,
        k_trunc_lb=lb.value,
        k_star_ub=ub.value,
        alpha_trunc_lb=_alpha(lb.value),
        alpha_star_ub=_alpha(ub.value),
        c1=corr.c1,
        c2=corr.c2,
        in_window=lb.in_window and ub.in_window and corr.in_window,
        sandwich_ok=bool(lb.value <= ub_shifted.value),
    )
