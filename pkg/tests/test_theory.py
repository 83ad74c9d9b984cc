"""Closed-form characteristic coefficients and emergent evolution."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaptooth.lattice import (
    DiffusivityProfile,
    VariationProfile,
    bloch_matrix,
    char_poly_bruteforce,
)
from gaptooth.theory import (
    SymbolValue,
    char_coeff,
    g0_small_eta,
    lambda0_quadratic,
    lambda0_series,
    quadratic_table,
)


def random_profile(rng, K):
    return DiffusivityProfile(tuple(rng.uniform(0.5, 2.0, K)))


class TestSymbolValue:
    def test_from_phase(self):
        s = SymbolValue.from_phase(math.pi)
        assert s.s2 == pytest.approx(-4.0)
        assert SymbolValue.from_phase(0.0).s2 == 0.0

    def test_range_validation(self):
        with pytest.raises(ValueError):
            SymbolValue(s2=0.5, phase=0.0)
        with pytest.raises(ValueError):
            SymbolValue(s2=-4.5, phase=math.pi)


class TestCharCoeff:
    def test_ck_is_one(self):
        rng = np.random.default_rng(3)
        for K in (2, 3, 4, 5):
            p = random_profile(rng, K)
            c = char_coeff(K, p, SymbolValue.from_phase(0.4))
            assert c == pytest.approx(1.0, rel=1e-12)

    def test_uniform_k4_known_values(self):
        p = DiffusivityProfile((1.0, 1.0, 1.0, 1.0))
        s = SymbolValue.from_phase(0.7)
        assert char_coeff(1, p, s) == pytest.approx(16.0, rel=1e-13)
        assert char_coeff(2, p, s) == pytest.approx(20.0, rel=1e-13)

    def test_k4_quadratic_matches_pair_sums(self):
        # c_2 = 3 sum_i k_i k_{i+1} + 4 sum_{i=1,2} k_i k_{i+2} for K = 4
        rng = np.random.default_rng(11)
        v = rng.uniform(0.5, 2.0, 4)
        p = DiffusivityProfile(tuple(v))
        expected = 3.0 * sum(v[i] * v[(i + 1) % 4] for i in range(4)) + 4.0 * (
            v[0] * v[2] + v[1] * v[3]
        )
        got = char_coeff(2, p, SymbolValue.from_phase(0.0))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_ordering_sensitivity_of_c2(self):
        s = SymbolValue.from_phase(0.0)
        base = DiffusivityProfile((1.0, 2.0, 3.0, 4.0))
        swapped = DiffusivityProfile((1.0, 3.0, 2.0, 4.0))
        c_base = char_coeff(2, base, s)
        assert char_coeff(2, swapped, s) != pytest.approx(c_base, rel=1e-6)
        for same in (base.shifted(1), base.shifted(3), base.reversed()):
            assert char_coeff(2, same, s) == pytest.approx(c_base, rel=1e-12)

    def test_q_out_of_range(self):
        p = DiffusivityProfile((1.0, 2.0))
        s = SymbolValue.from_phase(0.1)
        with pytest.raises(ValueError):
            char_coeff(3, p, s)
        with pytest.raises(ValueError):
            char_coeff(-1, p, s)

    def test_oracle_equivalence_sample(self):
        rng = np.random.default_rng(42)
        for K in (2, 3, 4, 5):
            for _ in range(5):
                p = random_profile(rng, K)
                phi = rng.uniform(0.05, math.pi / 2)
                brute = char_poly_bruteforce(p, phi)
                s = SymbolValue.from_phase(phi)
                for q in range(K + 1):
                    assert char_coeff(q, p, s) == pytest.approx(
                        brute[q], rel=1e-9, abs=1e-9
                    )

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.floats(0.05, 1.2))
    @settings(max_examples=25, deadline=None)
    def test_shift_invariance(self, seed, K, phi):
        rng = np.random.default_rng(seed)
        p = random_profile(rng, K)
        s = SymbolValue.from_phase(phi)
        for q in range(K + 1):
            base = char_coeff(q, p, s)
            assert char_coeff(q, p.shifted(1), s) == pytest.approx(
                base, rel=1e-10, abs=1e-12
            )


class TestLambda0Quadratic:
    def test_zero_phase_neutral(self):
        p = DiffusivityProfile((1.0, 2.0, 3.0))
        assert lambda0_quadratic(p, SymbolValue.from_phase(0.0)) == 0.0

    def test_uniform_k2_small_phase(self):
        p = DiffusivityProfile((1.0, 1.0))
        for phi in (0.2, 0.8, 1.4):
            lam = lambda0_quadratic(p, SymbolValue.from_phase(phi))
            assert lam == pytest.approx(-4.0 * math.sin(phi / 2) ** 2, rel=1e-12)

    def test_k2_truncation_exact_strong_variation(self):
        p = DiffusivityProfile((1.0, 10.0))
        for phi in np.linspace(0.05, math.pi - 0.02, 25):
            lam = lambda0_quadratic(p, SymbolValue.from_phase(float(phi)))
            eig = np.linalg.eigvalsh(bloch_matrix(p, float(phi)))
            smallest = eig[np.argmin(np.abs(eig))]
            assert abs(lam - smallest) < 1e-10

    def test_negative_sign_and_monotone_zero(self):
        p = DiffusivityProfile((0.5, 1.5, 2.5))
        lam = lambda0_quadratic(p, SymbolValue.from_phase(0.3))
        assert lam < 0.0

    def test_out_of_regime_raises(self):
        # at the zone edge of a uniform 3-periodic medium the truncated
        # quadratic has complex roots
        p = DiffusivityProfile((1.0, 1.0, 1.0))
        with pytest.raises(ValueError, match="phase"):
            lambda0_quadratic(p, SymbolValue.from_phase(math.pi / 3))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    @settings(max_examples=25, deadline=None)
    def test_translation_reflection_invariance(self, seed, K):
        rng = np.random.default_rng(seed)
        p = random_profile(rng, K)
        s = SymbolValue.from_phase(0.11)
        base = lambda0_quadratic(p, s)
        assert lambda0_quadratic(p.shifted(1), s) == pytest.approx(
            base, abs=1e-12 * max(1.0, abs(base))
        )
        assert lambda0_quadratic(p.reversed(), s) == pytest.approx(
            base, abs=1e-12 * max(1.0, abs(base))
        )


class TestLambda0Series:
    def test_uniform_has_no_quartic_correction(self):
        coeffs = lambda0_series(DiffusivityProfile((1.7, 1.7)))
        assert coeffs.d2 == pytest.approx(1.7, rel=1e-13)
        assert coeffs.d4 == pytest.approx(0.0, abs=1e-13)

    def test_uniform_taylor_consistency(self):
        # d2 s2 + d4 s2^2 must reproduce -4 kappa sin^2(phi/2) through phi^4
        kappa0 = 2.0
        coeffs = lambda0_series(DiffusivityProfile((kappa0, kappa0)))
        for phi in (0.1, 0.05):
            s = SymbolValue.from_phase(phi)
            exact = -4.0 * kappa0 * math.sin(phi / 2) ** 2
            assert coeffs.evaluate(s) == pytest.approx(exact, abs=1e-12)

    def test_leading_coefficient_is_harmonic_mean(self):
        p = DiffusivityProfile((1.0, 3.0, 0.5))
        coeffs = lambda0_series(p)
        assert coeffs.d2 == pytest.approx(p.harmonic_mean, rel=1e-13)
        # lambda0 / s2 -> harmonic mean as the phase vanishes
        lam = lambda0_quadratic(p, SymbolValue.from_phase(1e-4))
        s2 = SymbolValue.from_phase(1e-4).s2
        assert lam / s2 == pytest.approx(p.harmonic_mean, rel=1e-6)

    def test_reversal_invariance(self):
        p = DiffusivityProfile((1.0, 2.0, 3.0, 4.0))
        a = lambda0_series(p)
        b = lambda0_series(p.reversed())
        assert a.d2 == pytest.approx(b.d2, rel=1e-14)
        assert a.d4 == pytest.approx(b.d4, rel=1e-14)

    def test_residual_order_at_least_five_and_a_half(self):
        # truncating the square-root series leaves an O(s2^3) remainder:
        # halving the phase must shrink the residual by about 2^6
        rng = np.random.default_rng(5)
        p = random_profile(rng, 2)
        coeffs = lambda0_series(p)
        phis = [0.2 / 2**m for m in range(4)]
        residuals = []
        for phi in phis:
            s = SymbolValue.from_phase(phi)
            residuals.append(abs(lambda0_quadratic(p, s) - coeffs.evaluate(s)))
        orders = [
            math.log2(a / b) for a, b in zip(residuals[:-1], residuals[1:])
        ]
        assert min(orders) >= 5.5


class TestQuadraticTable:
    def test_k2_values(self):
        t = quadratic_table(2)
        assert t.d == pytest.approx(0.5)
        assert t.d0 == pytest.approx(0.25)
        # per-term cross coefficient; the cyclic sum pairs eta_1 eta_2 twice,
        # so the effective weight of the product is 2 * 1/4 = 1/2, exactly
        # the quadratic content of the two-value harmonic mean
        assert t.dk == pytest.approx((0.25,))
        assert t.f0 == pytest.approx(1.0 / 16.0)
        assert t.fk == pytest.approx((-1.0 / 16.0,))

    def test_k4_values(self):
        t = quadratic_table(4)
        assert t.d == pytest.approx(0.25)
        assert t.d0 == pytest.approx(3.0 / 16.0)
        # cross coefficients follow the harmonic-mean expansion: 2/K^2,
        # halved at k = K/2 where the cyclic sum pairs each product twice
        assert t.dk == pytest.approx((2.0 / 16.0, 1.0 / 16.0))
        assert t.f0 == pytest.approx(15.0 / 192.0)
        assert t.fk[0] == pytest.approx(-1.0 / 32.0)
        assert t.fk[1] == pytest.approx(-18.0 / 384.0)

    def test_odd_k_has_no_half_entry(self):
        t = quadratic_table(3)
        assert len(t.dk) == 1
        assert len(t.fk) == 1

    def test_k_validation(self):
        with pytest.raises(ValueError):
            quadratic_table(1)

    @given(st.integers(2, 12))
    @settings(max_examples=11, deadline=None)
    def test_quadratic_content_matches_harmonic_mean(self, K):
        # the s2-side table entries are exactly the quadratic Taylor
        # coefficients of the harmonic mean of kappa_0 (1 + eta)
        t = quadratic_table(K)
        rng = np.random.default_rng(K)
        eta = rng.uniform(-1.0, 1.0, K) * 1e-3
        kh = K / np.sum(1.0 / (1.0 + eta))
        series = 1.0 + t.d * eta.sum() - t.d0 * (eta**2).sum()
        for k in range(1, K // 2 + 1):
            series += t.dk[k - 1] * float(np.sum(eta * np.roll(eta, -k)))
        assert series == pytest.approx(kh, abs=5e-9)


class TestG0SmallEta:
    def test_zero_variation_is_uniform_diffusion(self):
        v = VariationProfile(2.5, (0.0, 0.0, 0.0))
        s = SymbolValue.from_phase(0.3)
        assert g0_small_eta(v, s) == pytest.approx(2.5 * s.s2, rel=1e-14)

    def test_single_variation_k2(self):
        # one nonzero eta: s2 coefficient is kappa0 (1 + eps/2 - eps^2/4)
        eps = 0.08
        v = VariationProfile(1.0, (eps, 0.0))
        s = SymbolValue.from_phase(0.05)
        t = quadratic_table(2)
        expected = (1.0 + eps / 2 - eps**2 / 4) * s.s2 + (
            t.f0 * eps**2
        ) * s.s2**2
        assert g0_small_eta(v, s) == pytest.approx(expected, rel=1e-13)

    def test_richardson_cubic_scaling(self):
        # against the exact truncated root the difference is
        # O(eta^3) + O(s2^3); at a small enough phase the s2^3 floor is
        # negligible and halving eta must shrink the difference by about 8
        rng = np.random.default_rng(17)
        eta = rng.uniform(-1.0, 1.0, 4) * 0.1
        s = SymbolValue.from_phase(0.005)
        diffs = []
        for scale in (1.0, 0.5, 0.25):
            v = VariationProfile(1.0, tuple(scale * eta))
            lam = lambda0_quadratic(v.profile(), s)
            diffs.append(abs(g0_small_eta(v, s) - lam))
        ratios = [a / b for a, b in zip(diffs[:-1], diffs[1:])]
        assert ratios[0] == pytest.approx(8.0, rel=0.2)
        assert ratios[1] == pytest.approx(8.0, rel=0.2)
