import math

import numpy as np
import pytest

from l0trunc.bounds import (
    SF_ONE,
    WindowError,
    asymptotic_corrections,
    budget_bounds,
    candidate_classifier_weights,
    candidate_weights,
    eps_shift,
    head_cutoff,
    head_l1_norm,
    head_length,
    loss_bound_at_budget,
    robust_error_lower_bound,
    robust_error_upper_bound_diag,
    robust_error_upper_bound_general,
    tolerable_budget_upper,
    truncated_budget_lower,
)
from l0trunc.gmm import GaussianMixture, SnrVector, normalize, snr_vector
from l0trunc.special import normal_sf


def unit_profile(seed: int, d: int, decay: float = 0.7) -> SnrVector:
    rng = np.random.default_rng(seed)
    nu = rng.standard_normal(d) * decay ** np.arange(d)
    return SnrVector(nu / np.linalg.norm(nu))


class TestHeadCutoff:
    def test_forward_inverse(self):
        eps = float(normal_sf(math.sqrt(0.75)))
        assert head_cutoff(eps) == pytest.approx(0.5, abs=1e-9)

    def test_boundaries(self):
        assert head_cutoff(SF_ONE + 1e-6) < 0.01
        assert head_cutoff(0.5 - 1e-9) > 0.999

    def test_residual_tolerance(self):
        for eps in (0.2, 0.3, 0.45):
            c = head_cutoff(eps)
            assert abs(float(normal_sf(math.sqrt(1 - c * c))) - eps) < 1e-12

    def test_window_enforced(self):
        with pytest.raises(WindowError):
            head_cutoff(0.5)
        with pytest.raises(WindowError):
            head_cutoff(SF_ONE)


class TestHeadLength:
    def test_examples(self):
        snr = SnrVector(np.array([0.8, 0.6]))
        assert head_length(snr, 0.7) == 1
        assert head_length(snr, 0.9) == 2
        assert head_length(snr, 1e-9) == 1

    def test_requires_unit_norm(self):
        with pytest.raises(ValueError):
            head_length(SnrVector(np.array([1.0, 1.0])), 0.5)


class TestCandidateWeights:
    def test_identity_when_head_is_one(self):
        snr = unit_profile(0, 12)
        w = candidate_weights(snr, SF_ONE + 1e-5)  # c near 0, nothing zeroed
        np.testing.assert_array_equal(w, snr.values)

    def test_zeroes_head(self):
        # cutoff 0.9 on (0.8, 0.6): head length 2, so the top entry is zeroed
        eps = float(normal_sf(math.sqrt(1 - 0.81)))
        snr = SnrVector(np.array([0.8, 0.6]))
        w = candidate_weights(snr, eps)
        np.testing.assert_allclose(w, [0.0, 0.6], atol=1e-12)

    def test_tail_mass_floor(self):
        for seed in range(5):
            snr = unit_profile(seed, 30)
            for eps in (0.2, 0.3, 0.45):
                w = candidate_weights(snr, eps)
                c = head_cutoff(eps)
                assert np.sum(w**2) >= 1 - c * c - 1e-9

    def test_classifier_coordinates(self):
        rng = np.random.default_rng(4)
        model = normalize(GaussianMixture(rng.normal(size=9), rng.uniform(0.5, 2, size=9)))
        w = candidate_classifier_weights(model, 0.3)
        snr = SnrVector(snr_vector(model))
        w_tilde = candidate_weights(snr, 0.3)
        # whitened classifier weights reproduce the sorted profile
        np.testing.assert_allclose((w * model.sigma)[snr.perm], w_tilde, atol=1e-12)


class TestUpperBounds:
    def test_diag_plugin_k0(self):
        snr = unit_profile(1, 40)
        ub = robust_error_upper_bound_diag(snr.values, snr.values, 0)
        expect = 1 / math.sqrt(2 * math.log(40)) + SF_ONE
        assert ub.value == pytest.approx(expect, rel=1e-12)
        assert not ub.clamped

    def test_general_plugin_k0(self):
        d = 25
        mu = np.ones(d) / math.sqrt(d)
        ub = robust_error_upper_bound_general(mu, mu, np.eye(d), 0)
        expect = 1 / math.sqrt(2 * math.log(d)) + SF_ONE
        assert ub.value == pytest.approx(expect, rel=1e-12)

    def test_large_budget_clamps(self):
        snr = unit_profile(2, 30)
        ub = robust_error_upper_bound_diag(snr.values, snr.values, 1e6)
        assert ub.value == 1.0 and ub.clamped

    def test_scale_invariance_general(self):
        rng = np.random.default_rng(3)
        d = 12
        w = rng.normal(size=d)
        mu = rng.normal(size=d)
        A = rng.normal(size=(d, d))
        Sigma = A @ A.T + d * np.eye(d)
        u1 = robust_error_upper_bound_general(w, mu, Sigma, 2)
        u2 = robust_error_upper_bound_general(3.7 * w, mu, Sigma, 2)
        assert u1.raw == pytest.approx(u2.raw, rel=1e-12)

    def test_diag_matches_general_on_diagonal(self):
        rng = np.random.default_rng(5)
        d = 18
        sigma = rng.uniform(0.5, 2.0, size=d)
        nu = rng.standard_normal(d)
        nu /= np.linalg.norm(nu)
        mu = sigma * nu
        w_tilde = rng.normal(size=d)
        w = w_tilde / sigma
        for k in (0, 1, 4):
            general = robust_error_upper_bound_general(w, mu, np.diag(sigma**2), k)
            diag = robust_error_upper_bound_diag(w_tilde, nu, k)
            assert general.raw == pytest.approx(diag.raw, rel=1e-12)

    def test_candidate_weights_meet_theorem_chain(self):
        # at the analytic budget fraction the diagonal bound stays below
        # eps + sqrt(2 / log d)
        d_sym = 10**6
        L = math.log(d_sym)
        for seed in range(5):
            snr = unit_profile(seed, 60, decay=0.85)
            for eps in (0.2, 0.3, 0.4):
                c = head_cutoff(eps)
                a = math.sqrt(1 - c * c) / (16 * L)
                k = a * head_l1_norm(snr, eps)
                w = candidate_weights(snr, eps)
                ub = robust_error_upper_bound_diag(w, snr.values, k, d=d_sym)
                assert ub.raw <= eps + math.sqrt(2 / L) + 1e-12

    def test_errors(self):
        snr = unit_profile(6, 10)
        with pytest.raises(ValueError):
            robust_error_upper_bound_diag(np.zeros(10), snr.values, 1)
        with pytest.raises(ValueError):
            robust_error_upper_bound_general(np.ones(3), np.ones(3), np.zeros((3, 3)), 1)


class TestLowerBound:
    def test_empty_set(self):
        snr = unit_profile(7, 20)
        budget, err = robust_error_lower_bound(snr.values, [])
        assert budget == 0.0
        assert err.raw == pytest.approx(SF_ONE - 1 / math.log(20), rel=1e-12)

    def test_full_set(self):
        snr = unit_profile(8, 20)
        _, err = robust_error_lower_bound(snr.values, np.arange(20))
        assert err.raw == pytest.approx(0.5 - 1 / math.log(20), rel=1e-12)

    def test_two_dim_example(self):
        budget, err = robust_error_lower_bound(np.array([0.8, 0.6]), [0])
        assert budget == pytest.approx(0.8 * math.log(2), rel=1e-12)
        raw = float(normal_sf(0.6)) - 1 / math.log(2)
        assert err.raw == pytest.approx(raw, rel=1e-12)
        assert err.value == 0.0 and err.clamped  # negative floor clamps to 0

    def test_bad_indices(self):
        with pytest.raises(ValueError):
            robust_error_lower_bound(np.array([1.0, 0.0]), [2])
        with pytest.raises(ValueError):
            robust_error_lower_bound(np.array([1.0, 0.0]), [0, 0])


class TestLossBound:
    def test_zero_budget(self):
        snr = unit_profile(9, 50)
        v = loss_bound_at_budget(snr, 0.25, 0.0)
        assert v.raw == pytest.approx(0.25 + 1 / math.sqrt(2 * math.log(50)), rel=1e-12)

    def test_affine_in_a(self):
        snr = unit_profile(10, 50)
        vals = [loss_bound_at_budget(snr, 0.3, a).raw for a in (0.0, 0.1, 0.2)]
        assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0], rel=1e-9)
        assert vals[1] > vals[0]

    def test_analytic_fraction_bound(self):
        d_sym = 10**6
        L = math.log(d_sym)
        snr = unit_profile(11, 50)
        for eps in (0.2, 0.35):
            c = head_cutoff(eps)
            a = math.sqrt(1 - c * c) / (16 * L)
            v = loss_bound_at_budget(snr, eps, a, d=d_sym)
            assert v.raw <= eps + math.sqrt(2 / L) + 1e-12


class TestBudgetBounds:
    def test_spike_profile(self):
        # all SNR mass on one coordinate
        nu = np.zeros(40)
        nu[0] = 1.0
        snr = SnrVector(nu)
        d_sym = 1e9
        L = math.log(d_sym)
        eps = 0.3
        ub = tolerable_budget_upper(snr, eps, d=d_sym, strict=False)
        assert ub.value == pytest.approx(L, rel=1e-12)
        lb = truncated_budget_lower(snr, eps, d=d_sym, strict=False)
        c = head_cutoff(eps)
        assert lb.value == pytest.approx(math.sqrt(1 - c * c) / (16 * L), rel=1e-12)
        assert lb.value / ub.value == pytest.approx(math.sqrt(1 - c * c) / (16 * L * L), rel=1e-12)

    def test_uniform_profile(self):
        d = 100
        snr = SnrVector(np.full(d, 1 / math.sqrt(d)))
        eps = 0.35
        c = head_cutoff(eps)
        lam = head_length(snr, c)
        assert lam == math.ceil(c * c * d) or lam == int(np.ceil(c * c * d)) + 1
        ub = tolerable_budget_upper(snr, eps, d=d, strict=False)
        assert ub.value == pytest.approx(lam / math.sqrt(d) * math.log(d), rel=1e-12)

    def test_upper_monotone_in_eps(self):
        snr = unit_profile(12, 80)
        d_sym = 1e12
        vals = [tolerable_budget_upper(snr, e, d=d_sym, strict=False).value for e in np.linspace(0.2, 0.49, 12)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_windows(self):
        snr = unit_profile(13, 30)
        with pytest.raises(WindowError):
            tolerable_budget_upper(snr, 0.5, d=1e6)
        with pytest.raises(WindowError):
            truncated_budget_lower(snr, 0.49, d=1e6)  # above 1/2 - sqrt(2/log d)
        assert tolerable_budget_upper(snr, 0.5, d=1e6, strict=False).value == math.inf
        v = truncated_budget_lower(snr, 0.49, d=1e6, strict=False)
        assert math.isfinite(v.value) and not v.in_window

    def test_sandwich_strict_regime(self):
        # windows are non-empty once log d is large enough; check the real
        # inequality there
        d_sym = 1e12
        shift = eps_shift(d_sym)
        rng = np.random.default_rng(21)
        for seed in range(20):
            snr = unit_profile(seed, 50, decay=float(rng.uniform(0.6, 0.95)))
            eps = float(rng.uniform(SF_ONE + 1e-3, 0.5 - shift - 1e-3))
            lb = truncated_budget_lower(snr, eps, d=d_sym)
            ub = tolerable_budget_upper(snr, eps + shift, d=d_sym)
            assert lb.value <= ub.value

    def test_budget_bounds_row(self):
        snr = unit_profile(14, 60)
        row = budget_bounds(snr, 0.3, d=1e12)
        assert row.sandwich_ok
        assert row.alpha_star_ub == pytest.approx(math.log(row.k_star_ub) / math.log(1e12), rel=1e-12)


class TestContinuity:
    def test_smooth_outputs_have_no_jumps(self):
        # the cutoff, the loss bound and the corrections are continuous in
        # eps on their windows (the head-length-driven budget curves are
        # step functions by construction and are excluded): refining the
        # grid must shrink the largest increment, which a jump would not
        snr = unit_profile(20, 40)
        d_sym = 1e12
        cases = [
            (head_cutoff, 0.2, 0.47),
            (lambda e: loss_bound_at_budget(snr, e, 0.01, d=d_sym).raw, 0.2, 0.47),
            (lambda e: asymptotic_corrections(e, d_sym, strict=False).c2, 0.466, 0.497),
        ]
        for fn, lo, hi in cases:
            coarse = np.array([fn(float(e)) for e in np.linspace(lo, hi, 200)])
            fine = np.array([fn(float(e)) for e in np.linspace(lo, hi, 400)])
            assert np.max(np.abs(np.diff(fine))) <= 0.7 * np.max(np.abs(np.diff(coarse)))


class TestCorrections:
    def test_formula_anchor(self):
        # log d = 100
        corr = asymptotic_corrections(0.4, math.exp(100.0))
        assert corr.c1 == pytest.approx(0.01 + math.sqrt(0.02), rel=1e-12)
        assert corr.in_window

    def test_c1_ignores_eps(self):
        d = math.exp(40.0)
        assert asymptotic_corrections(0.45, d).c1 == asymptotic_corrections(0.48, d).c1

    def test_vanish_and_monotone(self):
        eps = 0.49
        grid = [10.0**p for p in range(11, 17)]
        c1s, c2s = [], []
        for d in grid:
            corr = asymptotic_corrections(eps, d)
            assert corr.in_window
            c1s.append(corr.c1)
            c2s.append(corr.c2)
        assert all(b < a for a, b in zip(c1s, c1s[1:]))
        assert all(b < a for a, b in zip(c2s, c2s[1:]))
        # decay toward zero is slow (1/sqrt(log d)) but visible
        assert c1s[-1] < 0.85 * c1s[0] and c2s[-1] < 0.85 * c2s[0]

    def test_window_enforced(self):
        with pytest.raises(WindowError):
            asymptotic_corrections(0.3, 1e6)
        corr = asymptotic_corrections(0.3, 1e6, strict=False)
        assert not corr.in_window
