import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l0trunc.truncation import (
    DimensionMismatch,
    InvalidTruncation,
    NonFiniteInput,
    removed_to_keep,
    survivor_mask,
    truncated_inner_product,
    truncated_matvec,
    truncated_matvec_batch,
    truncated_row_sums,
)


def oracle_sum(w, x, k):
    """Brute-force reference: stable descending sort, ascending-index sum.

    At k = 0 the operation is defined as the ordinary inner product, so the
    oracle defers to the platform dot there.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    u = w * x
    order = np.argsort(-u, kind="stable")
    kept = np.sort(order[k : len(u) - k])
    if k == 0:
        return float(np.dot(w, x)), kept
    total = 0.0
    for i in kept:
        total += u[i]
    return total, kept


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def vec_pairs(draw):
    d = draw(st.integers(min_value=1, max_value=40))
    w = draw(arrays(np.float64, d, elements=finite))
    x = draw(arrays(np.float64, d, elements=finite))
    k = draw(st.integers(min_value=0, max_value=(d - 1) // 2))
    return w, x, k


class TestExamples:
    def test_k0_is_plain_dot(self):
        assert truncated_inner_product([1.0, 2.0], [3.0, 4.0], 0) == 11.0

    def test_drop_one_each_side(self):
        w = np.ones(5)
        x = np.array([5.0, -3.0, 2.0, 0.0, 1.0])
        assert truncated_inner_product(w, x, 1) == 3.0

    def test_deviation_within_lemma_bound(self):
        w = np.ones(3)
        x = np.ones(3)
        xp = np.array([100.0, 1.0, 1.0])
        t = truncated_inner_product(w, xp, 1)
        assert t == 1.0
        assert abs(t - np.dot(w, x)) == 2.0 <= 8 * 1 * np.max(np.abs(w * x))

    def test_matvec_per_row(self):
        W = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
        x = np.array([2.0, -1.0, 3.0])
        np.testing.assert_array_equal(truncated_matvec(W, x, 1, bias=np.zeros(2)), [0.0, 0.0])

    def test_matvec_k0_is_matrix_product(self):
        rng = np.random.default_rng(0)
        W = rng.normal(size=(4, 7))
        x = rng.normal(size=7)
        b = rng.normal(size=4)
        np.testing.assert_allclose(truncated_matvec(W, x, 0, bias=b), W @ x + b, rtol=0, atol=1e-12)

    def test_matvec_bias_after_truncation(self):
        W = np.ones((1, 5))
        x = np.array([5.0, -3.0, 2.0, 0.0, 1.0])
        np.testing.assert_array_equal(truncated_matvec(W, x, 1, bias=np.array([10.0])), [13.0])

    def test_mask_example(self):
        w = np.ones(5)
        x = np.array([5.0, -3.0, 2.0, 0.0, 1.0])
        np.testing.assert_array_equal(survivor_mask(w, x, 1), [2, 3, 4])

    def test_mask_k0_is_identity(self):
        np.testing.assert_array_equal(survivor_mask(np.ones(4), np.ones(4), 0), np.arange(4))

    def test_mask_tie_breaks_by_lower_index_ranking_higher(self):
        # products (7, 7, 0): the 7 at index 0 outranks the 7 at index 1,
        # so index 0 is dropped from the top, index 2 from the bottom, and
        # the single survivor (d - 2k = 1) is index 1
        w = np.array([1.0, 1.0, 1.0])
        x = np.array([7.0, 7.0, 0.0])
        np.testing.assert_array_equal(survivor_mask(w, x, 1), [1])


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            truncated_inner_product([1.0, 2.0], [1.0], 0)

    def test_2k_equal_d_rejected(self):
        with pytest.raises(InvalidTruncation):
            truncated_inner_product([1.0, 2.0], [1.0, 2.0], 1)

    def test_negative_k_rejected(self):
        with pytest.raises(InvalidTruncation):
            truncated_inner_product([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], -1)

    def test_non_integer_k_rejected(self):
        with pytest.raises(InvalidTruncation):
            truncated_inner_product([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.5)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteInput):
            truncated_inner_product([1.0, np.nan, 3.0], [1.0, 2.0, 3.0], 1)
        with pytest.raises(NonFiniteInput):
            truncated_matvec(np.full((2, 3), np.inf), np.ones(3), 1)

    def test_matvec_bias_length(self):
        with pytest.raises(DimensionMismatch):
            truncated_matvec(np.ones((2, 3)), np.ones(3), 1, bias=np.ones(3))


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(vec_pairs())
    def test_matches_bruteforce_oracle(self, wxk):
        w, x, k = wxk
        expect, kept = oracle_sum(w, x, k)
        assert truncated_inner_product(w, x, k) == expect
        np.testing.assert_array_equal(survivor_mask(w, x, k), kept)

    @settings(max_examples=100, deadline=None)
    @given(vec_pairs(), st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, wxk, perm_seed):
        # the kept multiset is permutation invariant; the sum may move by
        # reordering rounding, bounded by d * eps * l1(products)
        w, x, k = wxk
        perm = np.random.default_rng(perm_seed).permutation(len(w))
        a = truncated_inner_product(w[perm], x[perm], k)
        b = truncated_inner_product(w, x, k)
        slack = len(w) * np.finfo(float).eps * (np.abs(w * x).sum() + 1.0)
        assert abs(a - b) <= slack

    @settings(max_examples=100, deadline=None)
    @given(vec_pairs(), st.floats(min_value=-4.0, max_value=4.0, allow_nan=False))
    def test_scaling(self, wxk, c):
        w, x, k = wxk
        base = truncated_inner_product(w, x, k)
        scaled = truncated_inner_product(c * w, x, k)
        np.testing.assert_allclose(scaled, c * base, rtol=1e-9, atol=1e-9 * max(1.0, abs(base)))

    def test_negation_is_exact_without_ties(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = int(rng.integers(3, 30))
            k = int(rng.integers(0, (d - 1) // 2 + 1))
            w = rng.normal(size=d)
            x = rng.normal(size=d)
            assert truncated_inner_product(-w, x, k) == -truncated_inner_product(w, x, k)

    @settings(max_examples=100, deadline=None)
    @given(vec_pairs())
    def test_mask_consistency(self, wxk):
        w, x, k = wxk
        mask = survivor_mask(w, x, k)
        resum = 0.0
        for i in mask:
            resum += w[i] * x[i]
        val = truncated_inner_product(w, x, k)
        assert resum == pytest.approx(val, rel=1e-12, abs=1e-9)

    def test_determinism(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=301)
        x = rng.normal(size=301)
        vals = {truncated_inner_product(w, x, 9) for _ in range(5)}
        assert len(vals) == 1

    def test_lemma_bound_fuzz_small(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            d = int(rng.integers(2, 50))
            k = int(rng.integers(0, (d - 1) // 2 + 1))
            w = rng.normal(size=d) * 10.0 ** float(rng.integers(-2, 3))
            x = rng.normal(size=d)
            xp = x.copy()
            if k:
                flips = rng.choice(d, size=rng.integers(0, k + 1), replace=False)
                xp[flips] = rng.normal(size=flips.size) * 1e4
            lhs = abs(truncated_inner_product(w, xp, k) - np.dot(w, x))
            rhs = 8 * k * np.max(np.abs(w * x))
            assert lhs <= rhs + 1e-9 * max(1.0, rhs)


class TestBatch:
    def test_batch_matches_scalar_rows(self):
        rng = np.random.default_rng(5)
        W = rng.normal(size=(6, 33))
        X = rng.normal(size=(9, 33))
        out, removed = truncated_matvec_batch(W, X, 4, return_removed=True)
        for s in range(9):
            for i in range(6):
                assert out[s, i] == truncated_inner_product(W[i], X[s], 4)
        keep = removed_to_keep(removed, 33)
        # survivor mask agrees with the public per-pair op
        for s in range(3):
            for i in range(3):
                np.testing.assert_array_equal(np.flatnonzero(keep[s, i]), survivor_mask(W[i], X[s], 4))

    def test_row_sums_match_scalar(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=21)
        X = rng.normal(size=(17, 21))
        sums = truncated_row_sums(X * w, 3)
        for s in range(17):
            assert sums[s] == truncated_inner_product(w, X[s], 3)

    def test_batch_independent_of_batching(self):
        rng = np.random.default_rng(8)
        W = rng.normal(size=(5, 40))
        X = rng.normal(size=(12, 40))
        full = truncated_matvec_batch(W, X, 6)
        parts = np.vstack([truncated_matvec_batch(W, X[i : i + 3], 6) for i in range(0, 12, 3)])
        np.testing.assert_array_equal(full, parts)
