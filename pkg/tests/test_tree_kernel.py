import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_kernel_lab.errors import EtaOutOfRange, NTooSmall, OutOfSpectrum
from spectral_kernel_lab.tree_core import delta_at_root, tp_apply
from spectral_kernel_lab.tree_kernel import (
    SpectralPoint,
    design_kernel,
    dirichlet_search,
    fejer,
    fit_decay_constant,
    kernel_from_propagators,
    kernel_from_propagators_operator,
    recurrence_kernel,
    spherical_eigenfunction,
    spherical_transform,
    spherical_transform_grid,
    untempered_betas,
    verify_design,
)
from spectral_kernel_lab.wave import chebyshev_operator


class TestSpectralPoint:
    def test_eigenvalues(self):
        assert SpectralPoint.tempered(math.pi / 2).eigenvalue == pytest.approx(0.0, abs=1e-15)
        assert SpectralPoint("untempered_negative", 0.3).eigenvalue == pytest.approx(-2 * math.cosh(0.3))

    def test_from_eigenvalue(self):
        assert SpectralPoint.from_eigenvalue(2.0).parameter == 0.0
        pt = SpectralPoint.from_eigenvalue(2.05, 5)
        assert pt.kind == "untempered_positive"
        assert pt.parameter == pytest.approx(math.acosh(1.025))

    def test_out_of_spectrum(self):
        with pytest.raises(OutOfSpectrum):
            SpectralPoint.from_eigenvalue(2.4, 3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SpectralPoint.tempered(4.0)


class TestSphericalEigenfunction:
    def test_hand_recursion(self):
        phi = spherical_eigenfunction(3, SpectralPoint.tempered(math.pi / 2), 4)
        assert phi[0] == 1
        assert phi[1] == pytest.approx(0.0, abs=1e-15)
        assert phi[2] == pytest.approx(-1 / 3)

    @pytest.mark.parametrize("p", [2, 3, 5])
    def test_spectral_edge_is_constant(self, p):
        # the constant function has eigenvalue (p+1)/sqrt(p)
        pt = SpectralPoint("untempered_positive", 0.5 * math.log(p))
        phi = spherical_eigenfunction(p, pt, 10)
        assert np.allclose(phi, 1.0, atol=1e-12)

    @pytest.mark.parametrize("p", [2, 3, 5])
    def test_double_root_at_two(self, p):
        # at lambda = 2 the scaled recursion has a double root, so it is affine
        phi = spherical_eigenfunction(p, SpectralPoint.tempered(0.0), 10)
        scaled = phi * p ** (np.arange(11) / 2)
        assert np.allclose(np.diff(scaled, 2), 0.0, atol=1e-9)

    @pytest.mark.parametrize("theta", [0.3, 1.2, 2.9])
    def test_eigenvector_of_tp(self, theta):
        p, R = 5, 12
        pt = SpectralPoint.tempered(theta)
        phi = spherical_eigenfunction(p, pt, R)
        # T_p on radial vectors: (T f)[0] = (p+1) f[1]/sqrt p,
        # (T f)[d] = (f[d-1] + p f[d+1])/sqrt p
        s = math.sqrt(p)
        Tphi = np.empty(R)
        Tphi[0] = (p + 1) * phi[1] / s
        Tphi[1:] = (phi[:-2] + p * phi[2:]) / s
        assert np.allclose(Tphi, pt.eigenvalue * phi[:R], atol=1e-10)


class TestSphericalTransform:
    def test_delta_is_identity(self):
        d = delta_at_root(3, 4)
        for th in (0.0, 1.0, 3.0):
            assert spherical_transform(d, SpectralPoint.tempered(th)) == pytest.approx(1.0)

    def test_tp_delta(self):
        k = tp_apply(delta_at_root(5, 4))
        for th in (0.2, 1.7):
            assert spherical_transform(k, SpectralPoint.tempered(th)) == pytest.approx(2 * math.cos(th))

    @pytest.mark.parametrize("p", [2, 3, 5])
    def test_propagated_delta_gives_cosine(self, p):
        th = np.linspace(0, math.pi, 41)
        for n in range(0, 17, 2):
            k = chebyshev_operator("first", n, delta_at_root(p, n + 1))
            h = spherical_transform_grid(k, 2 * np.cos(th))
            assert np.allclose(h, np.cos(n * th), atol=1e-10)

    def test_linearity_with_tp(self):
        p = 3
        k = chebyshev_operator("first", 4, delta_at_root(p, 8))
        lam = np.linspace(-2, 2, 31)
        h1 = spherical_transform_grid(tp_apply(k), lam)
        assert np.allclose(h1, lam * spherical_transform_grid(k, lam), atol=1e-10)


class TestFejer:
    def test_peak_and_nonnegative(self):
        for L in (3, 8, 20):
            assert fejer(L, 0.0) == pytest.approx(L)
            x = np.linspace(-10, 10, 2001)
            assert np.min(fejer(L, x)) >= -1e-12

    def test_cosine_expansion(self):
        L, x = 6, 0.37
        series = 1 + sum(2 * (L - j) / L * math.cos(j * x) for j in range(1, L))
        assert fejer(L, x) == pytest.approx(series)


class TestKernelAssembly:
    @pytest.mark.parametrize("p", [2, 3, 7])
    def test_closed_form_matches_operator(self, p):
        coeffs = [(4, Fraction(3, 2)), (8, Fraction(1, 2)), (12, Fraction(-1, 3))]
        assert kernel_from_propagators(p, coeffs, 14) == kernel_from_propagators_operator(p, coeffs, 14)


class TestDirichletSearch:
    def test_zero_angle(self):
        for Q in (1, 5, 50):
            assert dirichlet_search(0.0, Q) == 1

    def test_rational_angle(self):
        assert dirichlet_search(2 * math.pi * 3 / 7, 7) == 7

    def test_golden_angle_exhaustive(self):
        theta = 2 * math.pi * (math.sqrt(5) - 1) / 2
        Q = 100
        q = dirichlet_search(theta, Q)
        folded = [abs(math.remainder(k * theta, 2 * math.pi)) for k in range(1, Q + 1)]
        assert folded[q - 1] < 2 * math.pi / Q
        assert all(f >= 2 * math.pi / Q - 1e-12 for f in folded[: q - 1])

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, math.pi), st.integers(1, 300))
    def test_always_finds(self, theta, Q):
        q = dirichlet_search(theta, Q)
        assert 1 <= q <= Q
        assert abs(math.remainder(q * theta, 2 * math.pi)) <= 2 * math.pi / Q


class TestDesign:
    def test_simple_branch_example(self):
        d = design_kernel(3, 0.3, 40, 0.0)
        assert d.branch == "simple"
        assert (d.L, d.q) == (5, 8)
        assert d.max_time == 32 <= 40
        rep = verify_design(d)
        assert rep.passed and rep.analytic_lower_bound

    def test_dirichlet_branch_example(self):
        eta, N, th = 0.25, 4000, math.pi / 3
        d = design_kernel(5, eta, N, th)
        assert d.branch == "dirichlet"
        assert d.Q * eta / 64 <= d.q_prime <= 2 * d.Q
        assert abs(math.remainder(d.q_prime * th, 2 * math.pi)) < math.pi * eta / 16
        assert all(d.checks.values())

    def test_dirichlet_window_exceeds_L_plus_one(self):
        d = design_kernel(5, 0.25, 800, math.pi / 3)
        lo, hi = d.window
        th = np.linspace(lo, hi, 101)
        assert np.min(fejer(2 * d.L, d.q_prime * th)) > d.L + 1

    def test_untempered_values(self):
        d = design_kernel(3, 0.25, 800, math.pi / 3)
        rep = verify_design(d)
        beta = untempered_betas(3, 64)
        lam = np.concatenate([2 * np.cosh(beta), -2 * np.cosh(beta)])
        assert np.min(d.h(lam)) >= d.L + 1
        assert rep.passed

    def test_eta_out_of_range(self):
        with pytest.raises(EtaOutOfRange):
            design_kernel(3, 0.6, 400, 0.0)

    def test_rejection_lists_checks(self):
        with pytest.raises(NTooSmall) as exc:
            design_kernel(5, 0.25, 100, math.pi / 3)
        assert exc.value.checks["phase_small"] is False

    def test_transform_is_fejer_window(self):
        d = design_kernel(5, 0.3, 200, 0.0)
        th = np.linspace(0, math.pi, 257)
        assert np.allclose(d.h(2 * np.cos(th)), d.fejer_form(th), atol=1e-8)

    def test_json(self):
        data = design_kernel(3, 0.3, 40, 0.0).to_json(include_kernel=True)
        assert data["branch"] == "simple" and data["kernel"]["R"] == 40

    @pytest.mark.parametrize("N", [200, 400, 800])
    def test_decay_exponent_sweep(self, N):
        rep = verify_design(design_kernel(5, 0.25, N, math.pi / 3))
        assert rep.delta_measured >= rep.delta_required

    def test_fit_decay_constant(self):
        designs = [design_kernel(3, 0.3, N, 0.0) for N in (100, 200)]
        C = fit_decay_constant(designs)
        assert math.isfinite(C) and C > 0


class TestRecurrenceKernel:
    def test_trivial_angle(self):
        rk = recurrence_kernel(3, 7, 2.0)
        assert rk.q == 1 and rk.a == pytest.approx(7.0)

    def test_pentagon_angle(self):
        rk = recurrence_kernel(5, 10, 2 * math.cos(2 * math.pi / 5))
        assert rk.q == 5
        assert rk.a >= 0.5 * rk.L

    def test_untempered(self):
        rk = recurrence_kernel(5, 6, 2.05)
        assert rk.a >= rk.L

    def test_kernel_transform_is_a(self):
        rk = recurrence_kernel(3, 3, 1.1)
        q, kernel, a = rk
        assert kernel.support_radius() <= rk.support
        assert spherical_transform_grid(kernel, [1.1])[0] == pytest.approx(a, rel=1e-9, abs=1e-9)

    def test_out_of_spectrum(self):
        with pytest.raises(OutOfSpectrum):
            recurrence_kernel(3, 5, 2.5)
