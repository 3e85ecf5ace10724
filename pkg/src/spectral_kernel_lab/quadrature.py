"""Adaptive piecewise-Chebyshev interpolants with stored error estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import QuadratureFailure

__all__ = ["SampledFunction", "gauss_legendre"]


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True)
class SampledFunction:
    """A function on ``[a, b]`` stored as Chebyshev series on panels.

    Attributes:
        breaks: panel endpoints, increasing, length ``n_panels + 1``.
        coeffs: array ``(n_panels, degree + 1)`` of Chebyshev coefficients on
            each panel mapped to ``[-1, 1]``.
        error: estimated max-norm error of the interpolant.
    """

    breaks: np.ndarray
    coeffs: np.ndarray
    error: float

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    @classmethod
    def from_function(
        cls,
        f: Callable[[np.ndarray], np.ndarray],
        a: float,
        b: float,
        tol: float = 1e-12,
        degree: int = 24,
        max_panels: int = 4096,
        initial_panels: int = 1,
    ) -> "SampledFunction":
        """Bisect ``[a, b]`` until the trailing Chebyshev coefficients are small.

        ``f`` must accept a numpy array.  The panel error is estimated as the
        sum of the magnitudes of the last three coefficients, relative to
        ``max(1, sum |c_k|)`` on the panel.

        Raises:
            QuadratureFailure: if ``max_panels`` is reached before ``tol``.
        """
        if not b > a:
            raise ValueError("need b > a")
        nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        edges = np.linspace(a, b, initial_panels + 1)
        todo = [(edges[i], edges[i + 1]) for i in range(initial_panels)]
        done = []
        worst = 0.0
        while todo:
            lo, hi = todo.pop()
            x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            c = C.chebfit(nodes, f(x), degree)
            scale = max(1.0, float(np.sum(np.abs(c))))
            est = float(np.sum(np.abs(c[-3:])))
            if est <= tol * scale or len(done) + len(todo) >= max_panels:
                if est > tol * scale:
                    raise QuadratureFailure(
                        f"interpolant did not reach tol={tol} with {max_panels} panels",
                        error_estimate=est,
                    )
                done.append((lo, hi, c))
                worst = max(worst, est)
            else:
                mid = 0.5 * (lo + hi)
                todo.append((mid, hi))
                todo.append((lo, mid))
        done.sort(key=lambda item: item[0])
        breaks = np.array([d[0] for d in done] + [done[-1][1]])
        coeffs = np.array([d[2] for d in done])
        return cls(breaks, coeffs, worst)

    def _locate(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(idx, 0, len(self.coeffs) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        idx = self._locate(flat)
        lo = self.breaks[idx]
        hi = self.breaks[idx + 1]
        s = (2.0 * flat - lo - hi) / (hi - lo)
        # Clenshaw over all points at once, each with its own panel's series
        ct = self.coeffs.T
        b1 = np.zeros_like(s)
        b2 = np.zeros_like(s)
        for k in range(ct.shape[0] - 1, 0, -1):
            b1, b2 = 2.0 * s * b1 - b2 + ct[k][idx], b1
        out = s * b1 - b2 + ct[0][idx]
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def derivative(self) -> "SampledFunction":
        """Piecewise derivative; the error estimate is scaled by degree**2/width."""
        widths = np.diff(self.breaks)
        deg = self.coeffs.shape[1] - 1
        d = np.array([C.chebder(c) * (2.0 / w) for c, w in zip(self.coeffs, widths)])
        d = np.concatenate([d, np.zeros((d.shape[0], 1))], axis=1)
        err = self.error * deg * deg * 2.0 / float(np.min(widths))
        return SampledFunction(self.breaks.copy(), d, err)

    def integral(self) -> float:
        """Integral over the whole domain."""
        total = 0.0
        for c, lo, hi in zip(self.coeffs, self.breaks[:-1], self.breaks[1:]):
            ci = C.chebint(c)
            total += 0.5 * (hi - lo) * (C.chebval(1.0, ci) - C.chebval(-1.0, ci))
        return float(total)
