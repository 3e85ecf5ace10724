import math

import numpy as np
import pytest

from spectral_kernel_lab.errors import EtaOutOfRange, NTooSmall
from spectral_kernel_lab.hyperbolic import (
    SYNTHETIC_KERNELS,
    SelbergFamilyMember,
    TruncatedKernel,
    abel_forward,
    abel_inverse,
    abel_roundtrip,
    annuli,
    combined_sup_sweep,
    design_hyperbolic_kernel,
    fourier_h,
    g_family,
    h_family,
    h_family_untempered,
    kappa,
    kernel_k,
    kernel_k_direct,
    kernel_sup,
    kernel_tail_integral,
    q_profile,
    q_profile_derivative,
    recurrence_amplification,
    selberg_roundtrip,
    truncated_transform,
    verify_annuli_bounds,
    verify_hyperbolic,
)


def k_reference(T, t):
    """Closed form: the Abel inversion of Q_T is a real part of (y + i)^(-3/2)."""
    t = np.asarray(t, dtype=float)
    y = (2 * t + 1) / math.sinh(T)
    return np.real((y + 1j) ** -1.5) / (math.tanh(T) * math.sqrt(2 * math.sinh(T)))


class TestClosedFormFamily:
    def test_q_at_zero(self):
        for T in (1.0, 2.5):
            assert q_profile(T, 0.0) == pytest.approx(1 / math.cosh(T), rel=1e-14)
            assert g_family(T, 0.0) / 2 == pytest.approx(q_profile(T, 0.0), rel=1e-14)

    def test_g_is_q_along_sinh_squared(self):
        T = 1.7
        u = np.linspace(0, 6, 13)
        assert np.allclose(g_family(T, u), 2 * q_profile(T, np.sinh(u / 2) ** 2), rtol=1e-13)

    def test_derivative_sign_change(self):
        T = 2.0
        w = (math.sinh(T) - 1) / 2  # (4w + 2)^2 = 2 cosh 2T - 2
        assert q_profile_derivative(T, w - 1e-3) > 0 > q_profile_derivative(T, w + 1e-3)

    def test_derivative_matches_finite_difference(self):
        T, w, h = 1.3, np.array([1e-3, 0.4, 3.0, 50.0]), 1e-6
        fd = (q_profile(T, w + h) - q_profile(T, w - h)) / (2 * h)
        assert np.allclose(q_profile_derivative(T, w), fd, rtol=1e-6, atol=1e-10)

    def test_untempered_family_at_least_one(self):
        s = np.linspace(0, 0.5, 11)
        vals = h_family_untempered(3.0, s)
        assert np.all(vals >= 1.0)
        assert np.allclose(vals, np.cosh(s * 3.0) / np.cos(np.pi * s / 2))


class TestFourier:
    def test_value_at_zero(self):
        assert fourier_h(SelbergFamilyMember(1.0), 0.0, 1e-8) == pytest.approx(1.0, abs=1e-6)

    def test_value_at_two(self):
        val = fourier_h(SelbergFamilyMember(1.5), 2.0, 1e-8)
        assert val == pytest.approx(math.cos(3.0) / math.cosh(math.pi), abs=1e-6)

    def test_zero_function(self):
        assert fourier_h(lambda u: 0.0, 1.3, support=4.0) == 0.0

    def test_needs_cutoff(self):
        with pytest.raises(ValueError):
            fourier_h(lambda u: math.exp(-u), 1.0)

    def test_roundtrip_grid(self):
        res = selberg_roundtrip([1.0, 3.0], r_points=16)
        assert res["max_deviation"] <= 1e-6


class TestKernelProfile:
    def test_kappa_closed_form(self):
        y = np.array([1e-3, 0.3, 1.0, 2.5, 10.0, 1e4])
        assert np.allclose(kappa(y), np.real((y + 1j) ** -1.5), atol=1e-12)

    @pytest.mark.parametrize("T", [1.0, 2.0, 4.5])
    def test_kernel_closed_form(self, T):
        t = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, 40)])
        assert np.allclose(kernel_k(T, t), k_reference(T, t), atol=1e-12)

    @pytest.mark.parametrize("t", [0.0, 0.5, 3.0, 40.0])
    def test_direct_quadrature(self, t):
        T = 2.0
        val, err = kernel_k_direct(T, t, 1e-10)
        assert err <= 1e-10
        assert val == pytest.approx(float(k_reference(T, t)), abs=1e-9)

    def test_abel_forward_reproduces_q(self):
        for T in (1.0, 2.0):
            for w in np.linspace(0, 10, 6):
                val = abel_forward(lambda s: float(kernel_k(T, s)), w, None, 1e-9)
                assert val == pytest.approx(q_profile(T, w), abs=1e-5)

    def test_abel_inverse_reproduces_k(self):
        T = 1.5
        for t in (0.0, 1.0, 7.0):
            val = abel_inverse(lambda w: float(q_profile_derivative(T, w)), t, None, 1e-9)
            assert val == pytest.approx(float(k_reference(T, t)), abs=1e-8)

    def test_abel_of_zero(self):
        assert abel_forward(lambda t: 0.0, 0.3, support=2.0) == 0.0

    def test_decay_and_plateau(self):
        for T in (1.0, 3.0, 6.0):
            ch = math.cosh(T)
            t_out = np.geomspace(ch, 1e8 * ch, 50)
            assert np.max(np.abs(kernel_k(T, t_out)) * t_out**1.5 / ch) <= 0.26
            t_in = np.linspace(0, ch, 50)
            assert np.max(np.abs(kernel_k(T, t_in))) * math.sqrt(ch) <= 0.5

    def test_sup_and_tail(self):
        for T in (1.0, 4.0):
            t = np.concatenate([[0.0], np.geomspace(1e-4, 1e6, 4000)])
            assert kernel_sup(T) >= np.max(np.abs(kernel_k(T, t))) - 1e-12
        assert kernel_tail_integral(4.0) < kernel_tail_integral(2.0)


class TestAbelRoundtrip:
    @pytest.mark.parametrize("name", sorted(SYNTHETIC_KERNELS))
    def test_synthetic(self, name):
        k, a = SYNTHETIC_KERNELS[name]
        res = abel_roundtrip(k, a, np.linspace(0, a, 6)[:-1])
        assert res["max_error"] <= 1e-5


class TestTruncatedKernel:
    def test_zero_beyond_cutoff(self):
        tk = TruncatedKernel(2.0)
        assert tk.k(tk.t_star * 1.01) == 0.0
        assert tk.g(4 * 2.0 + 0.1) == 0.0

    @pytest.mark.parametrize("T", [1.0, 2.0, 4.0])
    def test_within_certified_bound(self, T):
        res = truncated_transform(T, np.linspace(0, 5, 21))
        assert res["max_deviation"] <= res["certified_bound"]

    def test_value_at_zero(self):
        tk = TruncatedKernel(4.0)
        assert abs(float(tk.h(0.0)) - 1.0) <= 2 * math.exp(-4.0)

    def test_q_at_zero(self):
        for T in (2.0, 4.0):
            tk = TruncatedKernel(T)
            assert abs(float(tk.q(0.0)) - q_profile(T, 0.0)) <= math.exp(-T)

    def test_closed_form_beyond_chain(self):
        tk = TruncatedKernel(30.0)
        assert not tk.uses_chain
        assert tk.certified_bound == pytest.approx(1 / (2 * math.sinh(30.0)))


class TestCombinedKernel:
    def test_design_passes(self):
        ck = design_hyperbolic_kernel(0.25, 400, 0.7)
        rep = verify_hyperbolic(ck, grid_size=1001)
        assert rep.support_ok and rep.window_ok and rep.untempered_ok
        assert rep.support_radius < 2 * ck.N
        assert math.isfinite(rep.C0)

    def test_json(self):
        ck = design_hyperbolic_kernel(0.25, 400, 0.7)
        data = ck.to_json()
        assert data["L"] == 4 and data["T"] == ck.q_prime / 2

    def test_eta(self):
        with pytest.raises(EtaOutOfRange):
            design_hyperbolic_kernel(0.5, 400, 0.7)

    def test_rejection(self):
        with pytest.raises(NTooSmall) as exc:
            design_hyperbolic_kernel(0.25, 400, 3.0)
        assert not all(exc.value.checks.values())

    def test_sup_decays_like_exp_minus_T(self):
        res = combined_sup_sweep(4, [2.0, 4.0, 6.0])
        assert -1.2 <= res["fitted_exponent"] <= -0.8


class TestRecurrence:
    def test_zero_target(self):
        res = recurrence_amplification(0.0, 8)
        assert res.q == 1
        assert res.h_value >= 8 - 1.0

    def test_untempered_terms_at_least_one(self):
        res = recurrence_amplification(0.3, 4, untempered=True)
        assert res.h_value >= 4 * (1 - math.exp(-2))

    def test_annuli_layout(self):
        a = annuli(1, 4)
        assert len(a) == 5
        assert a[0] == (0.0, math.cosh(2.0))
        assert a[-1][1] == pytest.approx(math.sinh(16.0) ** 2)

    def test_annuli_bounded(self):
        rep = verify_annuli_bounds(1, 4)
        assert rep.max_value <= 1.0
        assert all(v >= 0 for v in rep.values)
