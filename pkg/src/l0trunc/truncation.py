"""Truncated inner-product kernels.

The k-truncated inner product of ``w`` and ``x`` sorts the elementwise
products in descending order, drops the top k and bottom k entries, and sums
the middle ``d - 2k``.  It is the building block of every classifier in this
package and the hot loop of both inference and attacks, so the selection is
done by a single-pass compiled kernel instead of a full sort.

Determinism contract
--------------------
* Ties between equal products are broken by ascending coordinate index: of
  two equal products the one with the lower index ranks higher in the
  descending order.  This makes the survivor set, and therefore the
  subgradient mask, well defined.
* The kept products are accumulated in ascending coordinate index order at
  double precision, with no pairwise or compensated summation, so repeated
  calls are bitwise reproducible on a given platform.
* ``k = 0`` reduces to the ordinary inner product and is computed by the
  platform dot product directly.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = [
    "TruncationError",
    "DimensionMismatch",
    "InvalidTruncation",
    "NonFiniteInput",
    "check_truncation",
    "truncated_inner_product",
    "truncated_matvec",
    "truncated_matvec_batch",
    "truncated_row_sums",
    "survivor_mask",
    "removed_to_keep",
]


class TruncationError(ValueError):
    """Base class for truncation input errors."""


class DimensionMismatch(TruncationError):
    """Operand dimensions do not agree."""


class InvalidTruncation(TruncationError):
    """k is negative, non-integral, or 2k >= d."""


class NonFiniteInput(TruncationError):
    """An operand contains NaN or infinity."""


def check_truncation(k: int, d: int) -> int:
    """Validate ``0 <= 2k < d`` and return ``k`` as a plain int."""
    if not isinstance(k, (int, np.integer)):
        raise InvalidTruncation(f"truncation parameter must be an integer, got {type(k).__name__}")
    k = int(k)
    if k < 0:
        raise InvalidTruncation(f"truncation parameter must be non-negative, got {k}")
    # 2k = d is rejected rather than treated as an empty sum.
    if 2 * k >= d:
        raise InvalidTruncation(f"need 2k < d, got k={k} with d={d}")
    return k


def _as_vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return v


def _check_pair(w, x):
    w = _as_vector(w, "w")
    x = _as_vector(x, "x")
    if w.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"w has dimension {w.shape[0]} but x has dimension {x.shape[0]}")
    return w, x


# ---------------------------------------------------------------------------
# Compiled selection kernel.
#
# Per row we keep two insertion-sorted arrays of (value, index) pairs holding
# the current top-k and bottom-k products under the tie rule above, then sum
# the survivors in ascending index order.  One pass, O(d * k) worst case,
# no sort of the full row.
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _ranks_above(v1, i1, v2, i2):
    # true iff (v1, i1) precedes (v2, i2) in the descending order
    return v1 > v2 or (v1 == v2 and i1 < i2)


@njit(cache=True, inline="always")
def _ranks_below(v1, i1, v2, i2):
    # true iff (v1, i1) follows (v2, i2) in the descending order
    return v1 < v2 or (v1 == v2 and i1 > i2)


@njit(cache=True)
def _row_truncate(u, k, topv, topi, botv, boti, rem):
    """Sum the middle d-2k entries of one product row.

    Scratch arrays topv/topi/botv/boti have length k; rem has length 2k and
    is left holding the removed indices in ascending order.
    """
    d = u.shape[0]
    nt = 0
    nb = 0
    for j in range(d):
        v = u[j]
        if nt < k:
            p = nt
            while p > 0 and _ranks_above(v, j, topv[p - 1], topi[p - 1]):
                topv[p] = topv[p - 1]
                topi[p] = topi[p - 1]
                p -= 1
            topv[p] = v
            topi[p] = j
            nt += 1
        elif _ranks_above(v, j, topv[k - 1], topi[k - 1]):
            p = k - 1
            while p > 0 and _ranks_above(v, j, topv[p - 1], topi[p - 1]):
                topv[p] = topv[p - 1]
                topi[p] = topi[p - 1]
                p -= 1
            topv[p] = v
            topi[p] = j
        if nb < k:
            p = nb
            while p > 0 and _ranks_below(v, j, botv[p - 1], boti[p - 1]):
                botv[p] = botv[p - 1]
                boti[p] = boti[p - 1]
                p -= 1
            botv[p] = v
            boti[p] = j
            nb += 1
        elif _ranks_below(v, j, botv[k - 1], boti[k - 1]):
            p = k - 1
            while p > 0 and _ranks_below(v, j, botv[p - 1], boti[p - 1]):
                botv[p] = botv[p - 1]
                boti[p] = boti[p - 1]
                p -= 1
            botv[p] = v
            boti[p] = j
    for t in range(k):
        rem[t] = topi[t]
        rem[k + t] = boti[t]
    rem.sort()
    s = 0.0
    ptr = 0
    for j in range(d):
        if ptr < 2 * k and rem[ptr] == j:
            ptr += 1
        else:
            s += u[j]
    return s


@njit(cache=True)
def _sum_rows_range(U, k, want_removed, out, removed, start, stop):
    d = U.shape[1]
    topv = np.empty(k)
    topi = np.empty(k, np.int64)
    botv = np.empty(k)
    boti = np.empty(k, np.int64)
    rem = np.empty(2 * k, np.int64)
    for r in range(start, stop):
        out[r] = _row_truncate(U[r], k, topv, topi, botv, boti, rem)
        if want_removed:
            removed[r] = rem


@njit(cache=True, parallel=True)
def _sum_rows_parallel(U, k, want_removed, out, removed):
    for r in prange(U.shape[0]):
        _sum_rows_range(U, k, want_removed, out, removed, r, r + 1)


def _sum_rows_kernel(U, k, want_removed):
    rows = U.shape[0]
    out = np.empty(rows)
    removed = np.empty((rows if want_removed else 0, 2 * k), np.int64)
    # thread fan-out costs more than it buys on small batches
    if rows < 32:
        _sum_rows_range(U, k, want_removed, out, removed, 0, rows)
    else:
        _sum_rows_parallel(U, k, want_removed, out, removed)
    return out, removed


@njit(cache=True)
def _matvec_range(W, X, k, want_removed, out, removed, start, stop):
    # products W[i] * X[s] are formed on the fly; no (n, m, d) temporary
    d = X.shape[1]
    m = W.shape[0]
    u = np.empty(d)
    topv = np.empty(k)
    topi = np.empty(k, np.int64)
    botv = np.empty(k)
    boti = np.empty(k, np.int64)
    rem = np.empty(2 * k, np.int64)
    for s in range(start, stop):
        for i in range(m):
            for j in range(d):
                u[j] = W[i, j] * X[s, j]
            out[s, i] = _row_truncate(u, k, topv, topi, botv, boti, rem)
            if want_removed:
                removed[s, i] = rem


@njit(cache=True, parallel=True)
def _matvec_parallel(W, X, k, want_removed, out, removed):
    for s in prange(X.shape[0]):
        _matvec_range(W, X, k, want_removed, out, removed, s, s + 1)


def _matvec_kernel(W, X, k, want_removed):
    n = X.shape[0]
    out = np.empty((n, W.shape[0]))
    removed = np.empty((n if want_removed else 0, W.shape[0], 2 * k), np.int64)
    if n < 8:
        _matvec_range(W, X, k, want_removed, out, removed, 0, n)
    else:
        _matvec_parallel(W, X, k, want_removed, out, removed)
    return out, removed


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def truncated_inner_product(w, x, k: int) -> float:
    """k-truncated inner product of two vectors.

    Sorts the elementwise products descending (ties by ascending index),
    drops k from each end and sums the remainder.
    """
    w, x = _check_pair(w, x)
    k = check_truncation(k, w.shape[0])
    if k == 0:
        return float(np.dot(w, x))
    sums, _ = _sum_rows_kernel((w * x)[None, :], k, False)
    return float(sums[0])


def survivor_mask(w, x, k: int) -> np.ndarray:
    """Indices of the d-2k coordinates whose products survive truncation.

    Returned in ascending order;
    ``sum(w[mask] * x[mask])`` reproduces :func:`truncated_inner_product`.
    """
    w, x = _check_pair(w, x)
    d = w.shape[0]
    k = check_truncation(k, d)
    if k == 0:
        return np.arange(d, dtype=np.int64)
    _, removed = _sum_rows_kernel((w * x)[None, :], k, True)
    keep = np.ones(d, dtype=bool)
    keep[removed[0]] = False
    return np.flatnonzero(keep)


def truncated_matvec(W, x, k: int, bias=None) -> np.ndarray:
    """Row-wise truncated product of a matrix with a vector.

    Entry i is ``truncated_inner_product(W[i], x, k)``; the bias, when
    given, is added after truncation.
    """
    out = truncated_matvec_batch(W, np.asarray(x, dtype=np.float64)[None, :], k, bias=bias)
    return out[0]


def truncated_matvec_batch(W, X, k: int, bias=None, return_removed: bool = False):
    """Truncated matvec applied to every row of ``X``.

    Returns an ``(n, m)`` array, plus the per-row removed-index array of
    shape ``(n, m, 2k)`` when ``return_removed`` is set (used for the
    truncation subgradient).  Rows are processed independently, so results
    do not depend on batching.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if W.ndim != 2 or X.ndim != 2:
        raise DimensionMismatch(f"expected 2-d operands, got W{W.shape}, X{X.shape}")
    m, d = W.shape
    if X.shape[1] != d:
        raise DimensionMismatch(f"W has {d} columns but inputs have dimension {X.shape[1]}")
    if not np.all(np.isfinite(W)):
        raise NonFiniteInput("weight matrix contains non-finite entries")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("input contains non-finite entries")
    k = check_truncation(k, d)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (m,):
            raise DimensionMismatch(f"bias has shape {bias.shape}, expected ({m},)")
        if not np.all(np.isfinite(bias)):
            raise NonFiniteInput("bias contains non-finite entries")
    if k == 0:
        out = X @ W.T
        removed = np.empty((X.shape[0], m, 0), np.int64) if return_removed else None
    else:
        out, removed = _matvec_kernel(W, X, k, return_removed)
        if not return_removed:
            removed = None
    if bias is not None:
        out = out + bias
    return (out, removed) if return_removed else out


def truncated_row_sums(U, k: int, return_removed: bool = False):
    """Truncated sums of pre-formed product rows ``U`` of shape (n, d).

    Each row is treated as an elementwise-product vector; used where the
    products are cheaper to form in bulk (e.g. a single weight vector
    against many inputs).
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array of product rows, got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise NonFiniteInput("product rows contain non-finite entries")
    k = check_truncation(k, U.shape[1])
    if k == 0:
        sums = np.cumsum(U, axis=1)[:, -1]
        removed = np.empty((len(U), 0), np.int64)
    else:
        sums, removed = _sum_rows_kernel(U, k, return_removed)
    return (sums, removed) if return_removed else sums


def removed_to_keep(removed: np.ndarray, d: int) -> np.ndarray:
    """Boolean survivor mask(s) from removed-index array(s)."""
    keep = np.ones(removed.shape[:-1] + (d,), dtype=bool)
    np.put_along_axis(keep, removed, False, axis=-1)
    return keep
