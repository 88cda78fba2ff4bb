import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksmix.errors import DegenerateInputError, ParameterError, PreconditionError
from ksmix.grid import PhysicalField, SpectralField, TorusGrid, fft, forward_transform, ifft_real
from ksmix.operators import (
    KernelSpec, attractive_field, calpha_constant, criticality_index, dichotomy_statistic,
    frac_laplacian_direct, frac_laplacian_spectral, gradient_maxprinciple_probe, kernel_laplacian,
    maxprinciple_probe, nonlinear_divergence, positivity_gap,
)

from conftest import band_limited, hermitian_random


def cos_field(n, d=1, amp=1.0):
    g = TorusGrid(d, n)
    return PhysicalField(g, amp * np.cos(2 * np.pi * g.coords[0]) * np.ones(g.shape))


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestCalpha:
    def test_d1(self):
        assert calpha_constant(1.0, 1) == pytest.approx(1 / np.pi, rel=1e-12)

    def test_d3(self):
        assert calpha_constant(1.0, 3) == pytest.approx(1 / np.pi**2, rel=1e-12)

    def test_alpha_two_d1_limit_formula(self):
        # alpha=1.5, d=1: 2^1.5 Gamma(1.25) / (sqrt(pi) |Gamma(-0.75)|)
        want = 2**1.5 * math.gamma(1.25) / (math.sqrt(math.pi) * abs(math.gamma(-0.75)))
        assert calpha_constant(1.5, 1) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_continuity(self, d):
        a, b = calpha_constant(0.999, d), calpha_constant(1.001, d)
        assert abs(a - b) / b <= 1e-2

    @pytest.mark.parametrize("alpha", [0.0, 2.0, -0.5, 2.5])
    def test_range(self, alpha):
        with pytest.raises(ParameterError):
            calpha_constant(alpha, 2)


class TestCriticality:
    def test_d2_critical(self):
        assert criticality_index(2, 2, 2) == 1

    def test_d1_subcritical(self):
        assert criticality_index(2, 1, 1) == 0.5

    def test_arithmetic(self):
        assert criticality_index(1.5, 2.5, 2) == 2.0

    def test_no_finite_index(self):
        with pytest.raises(ParameterError):
            criticality_index(1.0, 3.0, 2)


class TestSpectralFracLap:
    def test_constant(self):
        g = TorusGrid(2, 16)
        s = forward_transform(PhysicalField(g, np.full(g.shape, 2.0)))
        assert np.all(frac_laplacian_spectral(s, 1.5).coeffs == 0)

    def test_eigenmode(self):
        g = TorusGrid(2, 16)
        c = np.zeros(g.shape, complex)
        c[0, 1] = c[0, -1] = 0.5
        out = frac_laplacian_spectral(SpectralField(g, c), 1.5).coeffs
        assert np.abs(out - (2 * np.pi) ** 1.5 * c).max() < 1e-13

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), a=st.floats(-3, 3), b=st.floats(-3, 3),
           alpha=st.floats(0.05, 1.95))
    def test_linear(self, seed, a, b, alpha):
        g = TorusGrid(2, 16)
        s1, s2 = hermitian_random(g, seed), hermitian_random(g, seed + 1)
        lhs = frac_laplacian_spectral(s1 * a + s2 * b, alpha).coeffs
        rhs = a * frac_laplacian_spectral(s1, alpha).coeffs + b * frac_laplacian_spectral(s2, alpha).coeffs
        scale = np.abs(frac_laplacian_spectral(s1, alpha).coeffs).max() * 6 + 1
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale


class TestDirectFracLap:
    def test_constant(self):
        g = TorusGrid(1, 64)
        out = frac_laplacian_direct(PhysicalField(g, np.full(64, 3.0)), 1.2, 50)
        assert np.abs(out.values).max() < 1e-8

    def test_cosine_d1(self):
        f = cos_field(64)
        direct = frac_laplacian_direct(f, 1.2, 50).values
        spectral = ifft_real(frac_laplacian_spectral(forward_transform(f), 1.2).coeffs)
        assert rel_l2(direct, spectral) <= 1e-2

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_band_limited_d1(self, alpha):
        f = band_limited(TorusGrid(1, 64), 3, band=6)
        direct = frac_laplacian_direct(f, alpha, 50).values
        spectral = ifft_real(frac_laplacian_spectral(forward_transform(f), alpha).coeffs)
        assert rel_l2(direct, spectral) <= 1e-2

    @pytest.mark.parametrize("alpha", [0.8, 1.5])
    def test_band_limited_d2(self, alpha):
        f = band_limited(TorusGrid(2, 32), 5, band=3)
        direct = frac_laplacian_direct(f, alpha, 12).values
        spectral = ifft_real(frac_laplacian_spectral(forward_transform(f), alpha).coeffs)
        assert rel_l2(direct, spectral) <= 1e-2

    def test_mean_zero(self):
        f = band_limited(TorusGrid(1, 64), 8, band=5, mean=2.0)
        out = frac_laplacian_direct(f, 1.3, 50).values
        assert abs(out.mean()) <= 1e-8 * np.abs(out).max()

    def test_small_radius_flags(self):
        out = frac_laplacian_direct(cos_field(64), 0.3, 1, tail_tol=1e-6)
        assert out.meta["image_radius_warning"]

    def test_large_radius_clean(self):
        out = frac_laplacian_direct(cos_field(64), 1.2, 50)
        assert not out.meta["image_radius_warning"]

    def test_bad_radius(self):
        with pytest.raises(ParameterError):
            frac_laplacian_direct(cos_field(16), 1.0, 0)


def split_form(rho: SpectralField, kernel: KernelSpec) -> np.ndarray:
    """grad rho . B  +  rho div B with both products dealiased."""
    g = rho.grid
    phys = ifft_real(rho.coeffs)
    B = [ifft_real(b.coeffs) for b in attractive_field(rho, kernel)]
    divB = ifft_real(kernel_laplacian(rho, kernel).coeffs)
    total = phys * divB
    for kj, bj in zip(g.wavenumbers, B):
        total = total + ifft_real(2j * np.pi * kj * rho.coeffs) * bj
    return np.where(g.dealias_mask, fft(total), 0)


class TestKernel:
    def test_beta_range(self):
        for beta in (1.9, 3.0):
            with pytest.raises(ParameterError):
                KernelSpec(beta, 2)
        assert KernelSpec(2.5, 2).strong_singular
        assert not KernelSpec(2.0, 2).strong_singular
        assert KernelSpec(2.5, 2).c_beta == pytest.approx(0.5)

    def test_constant(self):
        g = TorusGrid(2, 16)
        s = forward_transform(PhysicalField(g, np.ones(g.shape)))
        for comp in attractive_field(s, KernelSpec(2, 2)):
            assert np.all(comp.coeffs == 0)
        assert np.all(nonlinear_divergence(s, KernelSpec(2, 2)).coeffs == 0)

    @pytest.mark.parametrize("d", [2, 3])
    def test_single_mode_attractive(self, d):
        g = TorusGrid(d, 8)
        c = np.zeros(g.shape, complex)
        e1 = (1,) + (0,) * (d - 1)
        c[e1] = 0.3
        c[tuple(-i for i in e1)] = 0.3
        B1 = attractive_field(SpectralField(g, c), KernelSpec(float(d), d))[0].coeffs
        # attractive sign: B points up the density gradient
        assert B1[e1] == pytest.approx(1j * 0.3 / (2 * np.pi), abs=1e-15)

    def test_bump_pulls_inward(self):
        g = TorusGrid(1 + 1, 32)
        x = g.coords[0] * np.ones(g.shape)
        rho = forward_transform(PhysicalField(g, np.exp(-(x**2) / 0.01)))
        B1 = ifft_real(attractive_field(rho, KernelSpec(2, 2))[0].coeffs)
        left = B1[g.axis_coords < -0.1]
        right = B1[(g.axis_coords > 0.1) & (g.axis_coords < 0.4)]
        assert left.min() > 0 and right.max() < 0

    @pytest.mark.parametrize("beta", [2.0, 2.5, 2.9])
    def test_divergence_identity(self, beta):
        g = TorusGrid(2, 32)
        rho = hermitian_random(g, 2)
        kernel = KernelSpec(beta, 2)
        div = sum(2j * np.pi * kj * b.coeffs for kj, b in zip(g.wavenumbers, attractive_field(rho, kernel)))
        want = -g.symbol(beta - 2) * rho.coeffs
        assert np.abs(div - want).max() <= 1e-12 * np.abs(want).max()

    def test_zero_mode_exact(self):
        g = TorusGrid(2, 32)
        for seed in range(5):
            rho = forward_transform(band_limited(g, seed, band=8, mean=1.0))
            assert nonlinear_divergence(rho, KernelSpec(2.5, 2)).coeffs[0, 0] == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_split_form(self, seed):
        g = TorusGrid(2, 32)
        rho = forward_transform(band_limited(g, seed, band=4, mean=1.0))
        kernel = KernelSpec(2.5, 2)
        conservative = nonlinear_divergence(rho, kernel).coeffs
        split = split_form(rho, kernel)
        assert np.abs(conservative - split).max() <= 1e-8 * np.abs(split).max()


class TestMaxPrinciple:
    def test_cosine(self):
        r = maxprinciple_probe(cos_field(64), 1.0, 2.0)
        assert r.max_value == pytest.approx(1.0)
        assert r.max_location == (32,)
        assert r.fraclap_at_max == pytest.approx(2 * np.pi, rel=1e-12)
        assert r.lp_norm_used == pytest.approx(1 / np.sqrt(2), rel=1e-12)
        # exponent p*alpha/d = 2 gives 2 pi * (1/sqrt 2)^2 = pi
        assert r.branch_ratio_a == pytest.approx(np.pi, rel=1e-12)
        assert r.branch_ratio_b == pytest.approx(np.sqrt(2), rel=1e-12)

    def test_near_constant(self):
        g = TorusGrid(2, 32)
        v = np.ones(g.shape)
        v[3, 5] += 1e-9
        assert maxprinciple_probe(PhysicalField(g, v), 1.0, 3.0).branch_ratio_b == pytest.approx(1.0, abs=1e-8)

    def test_tie_break_first_index(self):
        g = TorusGrid(1, 8)
        v = np.zeros(8)
        v[2] = v[6] = 1.0
        assert maxprinciple_probe(PhysicalField(g, v), 1.0, 2.0).max_location == (2,)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100), p=st.floats(1, 6),
           alpha=st.floats(0.1, 1.9))
    def test_scale_invariance(self, seed, c, p, alpha):
        f = band_limited(TorusGrid(2, 16), seed, band=3, mean=1.0)
        a = maxprinciple_probe(f, alpha, p)
        b = maxprinciple_probe(PhysicalField(f.grid, c * f.values), alpha, p)
        assert b.branch_ratio_a == pytest.approx(a.branch_ratio_a, rel=1e-10)
        assert b.branch_ratio_b == pytest.approx(a.branch_ratio_b, rel=1e-10)

    def test_nonpositive_max(self):
        g = TorusGrid(1, 8)
        with pytest.raises(PreconditionError):
            maxprinciple_probe(PhysicalField(g, -np.ones(8)), 1.0, 2.0)

    def test_bad_p(self):
        with pytest.raises(ParameterError):
            maxprinciple_probe(cos_field(8), 1.0, np.inf)

    def test_dichotomy_ensemble_positive(self):
        g = TorusGrid(2, 32)
        reports = [maxprinciple_probe(band_limited(g, s, band=4, mean=0.5), 1.5, 2.0)
                   for s in range(100)]
        stat = dichotomy_statistic(reports, c=1.0)
        assert np.isfinite(stat) and stat > 0

    def test_dichotomy_empty(self):
        with pytest.raises(DegenerateInputError):
            dichotomy_statistic([])


class TestGradientProbe:
    def test_cosine_first_derivative(self):
        r = gradient_maxprinciple_probe(cos_field(128), 1.0, 1)
        assert r.max_value == pytest.approx(2 * np.pi, rel=1e-12)
        assert r.lp_norm_used == pytest.approx(1.0)
        assert r.branch_ratio_b == pytest.approx(2 * np.pi, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_singular_energy_of_sine(self, alpha):
        # at the max of |g| the integrand is regular, so adaptive quadrature
        # over the minimal-image cell is an independent oracle
        from scipy.integrate import quad

        r = gradient_maxprinciple_probe(cos_field(256), alpha, 1)
        x0 = TorusGrid(1, 256).axis_coords[r.max_location[0]]
        g = lambda x: -2 * np.pi * np.sin(2 * np.pi * x)
        want = quad(lambda y: (g(x0) - g(x0 + y)) ** 2 / abs(y) ** (1 + alpha),
                    -0.5, 0.5, points=[0.0], limit=200)[0]
        assert r.fraclap_at_max == pytest.approx(want, rel=1e-3)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_scale_invariance(self, k):
        f = band_limited(TorusGrid(2, 32), 9, band=3)
        a = gradient_maxprinciple_probe(f, 1.2, k)
        b = gradient_maxprinciple_probe(PhysicalField(f.grid, 7.5 * f.values), 1.2, k)
        assert b.branch_ratio_a == pytest.approx(a.branch_ratio_a, rel=1e-8)
        assert b.branch_ratio_b == pytest.approx(a.branch_ratio_b, rel=1e-8)

    def test_constant_degenerate(self):
        g = TorusGrid(2, 16)
        with pytest.raises(DegenerateInputError):
            gradient_maxprinciple_probe(PhysicalField(g, np.full(g.shape, 4.0)), 1.0, 1)

    def test_bad_order(self):
        with pytest.raises(ParameterError):
            gradient_maxprinciple_probe(cos_field(16), 1.0, 4)


class TestPositivityGap:
    def test_constant(self):
        g = TorusGrid(2, 16)
        assert positivity_gap(PhysicalField(g, np.full(g.shape, 1.7)), 1.5, 4) == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_p2_equality_for_sign_definite(self, seed):
        f = band_limited(TorusGrid(2, 32), seed, band=4)
        f = PhysicalField(f.grid, f.values - f.values.min() + 0.1)
        assert abs(positivity_gap(f, 1.5, 2)) <= 1e-10 * max(1.0, np.abs(f.values).max() ** 2)

    def test_p2_sign_changing_strictly_positive(self):
        assert positivity_gap(cos_field(64), 1.0, 2) > 0.1

    @pytest.mark.parametrize("seed", range(10))
    def test_p4(self, seed):
        f = band_limited(TorusGrid(2, 32), seed, band=4)
        assert positivity_gap(f, 1.5, 4) >= -1e-8

    @pytest.mark.parametrize("p", [3, 1, 0])
    def test_odd_or_small_p(self, p):
        with pytest.raises(ParameterError):
            positivity_gap(cos_field(16), 1.0, p)
