import math

import numpy as np
import pytest

from spectral_kernel_lab.errors import QuadratureFailure
from spectral_kernel_lab.quadrature import SampledFunction, gauss_legendre


class TestGaussLegendre:
    def test_polynomial_exact(self):
        x, w = gauss_legendre(5, 1.0, 3.0)
        assert np.sum(w * x**9) == pytest.approx((3.0**10 - 1.0) / 10, rel=1e-13)


class TestSampledFunction:
    def test_smooth_function(self):
        f = SampledFunction.from_function(np.exp, 0.0, 2.0, tol=1e-13)
        x = np.linspace(0, 2, 101)
        assert np.max(np.abs(f(x) - np.exp(x))) < 1e-12
        assert f.integral() == pytest.approx(math.e**2 - 1, rel=1e-13)
        assert f.domain == (0.0, 2.0)

    def test_derivative(self):
        f = SampledFunction.from_function(np.sin, 0.0, 3.0, tol=1e-13)
        x = np.linspace(0.1, 2.9, 29)
        assert np.allclose(f.derivative()(x), np.cos(x), atol=1e-9)

    def test_scalar_call(self):
        f = SampledFunction.from_function(lambda x: x * x, -1.0, 1.0)
        assert isinstance(f(0.5), float)
        assert f(0.5) == pytest.approx(0.25)

    def test_kink_needs_panels(self):
        f = SampledFunction.from_function(np.abs, -1.0, 0.7, tol=1e-10)
        assert len(f.coeffs) > 1
        assert f(-0.3) == pytest.approx(0.3, abs=1e-9)

    def test_failure(self):
        with pytest.raises(QuadratureFailure):
            SampledFunction.from_function(lambda x: np.sign(x - 1 / math.pi), -1.0, 1.0, tol=1e-14, max_panels=8)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            SampledFunction.from_function(np.exp, 1.0, 1.0)
