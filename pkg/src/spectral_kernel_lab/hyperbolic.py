"""Selberg/Harish-Chandra transform numerics on the hyperbolic plane.

A radial point-pair kernel ``k(t)``, with ``t = sinh^2(d/2)`` for hyperbolic
distance ``d``, is linked to its spherical transform ``h(r)`` through

    Q(w) = int_w^inf k(t) (t - w)^(-1/2) dt          (Abel transform)
    g(u) = 2 Q(sinh^2(u/2))
    h(r) = (1/2pi) int e^{iru} g(u) du

and back by ``k(t) = -(1/pi) int_t^inf Q'(w) (w - t)^(-1/2) dw``.  The
``1/2pi`` in the Fourier step makes the closed-form family
``h_T(r) = cos(rT)/cosh(pi r/2)``, ``g_T(u) = sech(u-T) + sech(u+T)`` a
transform pair; with the bare Fourier integral ``g_T`` would give
``2 pi h_T``.

For this family the kernel reduces to a universal profile:
``k_T(t) = coth(T) (2 sinh T)^(-1/2) kappa(y)`` with ``y = (2t+1)/sinh T``
and ``kappa(y) = -(4/pi) int_0^inf f(y + s^2) ds``,
``f(x) = (1 - x^2)/(1 + x^2)^2``.  ``kappa`` is computed once by quadrature
and stored as a Chebyshev interpolant in ``w = y/(1+y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import EtaOutOfRange, NTooSmall, QuadratureFailure
from .quadrature import SampledFunction, gauss_legendre
from .tree_kernel import dirichlet_search, fejer

__all__ = [
    "AnnuliReport",
    "CombinedKernel",
    "HyperbolicReport",
    "RecurrenceAmplification",
    "SelbergFamilyMember",
    "TruncatedKernel",
    "abel_forward",
    "abel_inverse",
    "abel_roundtrip",
    "annuli",
    "combined_sup_sweep",
    "design_hyperbolic_kernel",
    "fourier_h",
    "g_family",
    "h_family",
    "h_family_untempered",
    "kappa",
    "kernel_k",
    "kernel_k_direct",
    "kernel_sup",
    "kernel_tail_integral",
    "q_profile",
    "q_profile_derivative",
    "recurrence_amplification",
    "SYNTHETIC_KERNELS",
    "abel_roundtrip_suite",
    "selberg_roundtrip",
    "selberg_sweep",
    "truncated_transform",
    "truncation_sweep",
    "verify_annuli_bounds",
    "verify_hyperbolic",
]

T_MAX = 700.0
CHAIN_MAX_T = 20.0


def _check_T(T: float):
    if not 0.0 < T <= T_MAX:
        raise ValueError(f"T must lie in (0, {T_MAX}], got {T}")


# ---------------------------------------------------------------------------
# closed-form family


def h_family(T: float, r):
    """``cos(rT) / cosh(pi r / 2)`` for real ``r``."""
    r = np.asarray(r, dtype=float)
    e = np.exp(-0.5 * np.pi * np.abs(r))
    out = np.cos(r * T) * 2.0 * e / (1.0 + e * e)
    return out.item() if out.ndim == 0 else out


def h_family_untempered(T: float, s):
    """``h_T(i s) = cosh(sT) / cos(pi s / 2)`` for ``|s| <= 1/2``."""
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) > 0.5):
        raise ValueError("untempered parameter must satisfy |s| <= 1/2")
    out = np.cosh(s * T) / np.cos(0.5 * np.pi * s)
    return out.item() if out.ndim == 0 else out


def g_family(T: float, u):
    """``4 cosh u cosh T / (cosh 2u + cosh 2T) = sech(u-T) + sech(u+T)``."""
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        out = 1.0 / np.cosh(u - T) + 1.0 / np.cosh(u + T)
    return out.item() if out.ndim == 0 else out


def _y_of_omega(T: float, omega):
    return (2.0 * np.asarray(omega, dtype=float) + 1.0) / math.sinh(T)


def q_profile(T: float, omega):
    """``Q_T(w) = 2(4w+2) cosh T / ((4w+2)^2 - 2 + 2 cosh 2T)``.

    Evaluated as ``coth(T) / (y + 1/y)`` with ``y = (2w+1)/sinh T``, which
    avoids overflow of ``cosh 2T``.
    """
    _check_T(T)
    y = _y_of_omega(T, omega)
    out = (1.0 / math.tanh(T)) / (y + 1.0 / y)
    return out.item() if out.ndim == 0 else out


def _f_stable(y):
    """``(1 - y^2) / (1 + y^2)^2`` without overflow for large ``y``."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) <= 1.0
    ys = np.where(small, y, 0.0)
    z = np.where(small, 1.0, 1.0 / np.where(small, 1.0, y))
    inner = (1.0 - ys * ys) / (1.0 + ys * ys) ** 2
    outer = (z ** 4 - z * z) / (z * z + 1.0) ** 2
    return np.where(small, inner, outer)


def q_profile_derivative(T: float, omega):
    """``Q_T'(w) = 8 cosh T (2 cosh 2T - 2 - (4w+2)^2) / (2 cosh 2T - 2 + (4w+2)^2)^2``.

    Equal to ``(2 coth T / sinh T) f(y)``; changes sign where
    ``(4w+2)^2 = 2 cosh 2T - 2``.
    """
    _check_T(T)
    y = _y_of_omega(T, omega)
    out = 2.0 / (math.tanh(T) * math.sinh(T)) * _f_stable(y)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class SelbergFamilyMember:
    """The closed-form triple indexed by ``T``."""

    T: float

    def __post_init__(self):
        _check_T(self.T)

    def h(self, r):
        return h_family(self.T, r)

    def h_untempered(self, s):
        return h_family_untempered(self.T, s)

    def g(self, u):
        return g_family(self.T, u)

    def q(self, omega):
        return q_profile(self.T, omega)

    def dq(self, omega):
        return q_profile_derivative(self.T, omega)

    def k(self, t, tol: float = 1e-10):
        return kernel_k(self.T, t, tol)

    @property
    def envelope(self) -> tuple[float, float]:
        """``(C, a)`` with ``|g(u)| <= C exp(-a u)`` for ``u >= 0``."""
        return 4.0 * math.cosh(self.T), 1.0


# ---------------------------------------------------------------------------
# the universal kernel profile


def _g_integrand(tau, w):
    # (1+y)^2 f(y + (1+y) tau^2) written in w = y/(1+y); bounded on [0, 1]
    m = w + tau * tau
    n = 1.0 - w
    return (n * n - m * m) / (n * n + m * m) ** 2


def _profile_quad(w: np.ndarray, tol: float = 1e-14):
    """``G(w) = (1+y)^(3/2) kappa(y)`` by vectorized adaptive quadrature."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    val, err = integrate.quad_vec(
        lambda tau: _g_integrand(tau, w), 0.0, np.inf, epsabs=tol, epsrel=tol
    )
    return -4.0 / np.pi * val, 4.0 / np.pi * err


@lru_cache(maxsize=1)
def _profile_interpolant() -> tuple[SampledFunction, float]:
    errs = []

    def f(w):
        v, e = _profile_quad(w)
        errs.append(float(np.max(e)))
        return v

    sf = SampledFunction.from_function(f, 0.0, 1.0, tol=1e-14, degree=24, initial_panels=4)
    return sf, sf.error + max(errs)


def profile_error() -> float:
    """Max-norm error estimate of the stored profile ``G``."""
    return _profile_interpolant()[1]


def _G(w):
    return _profile_interpolant()[0](w)


def kappa(y):
    """``kappa(y) = -(4/pi) int_0^inf f(y + s^2) ds`` from the stored interpolant."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        w = np.where(np.isinf(y), 1.0, y / (1.0 + y))
        out = _G(w) * (1.0 + y) ** -1.5
    return out.item() if out.ndim == 0 else out


def _kappa_direct(y: float, tol: float):
    """Scalar ``kappa`` by its own adaptive quadrature, with error estimate."""
    w = y / (1.0 + y) if math.isfinite(y) else 1.0
    val, err = integrate.quad(lambda tau: _g_integrand(tau, w), 0.0, np.inf, epsabs=tol * 1e-2, epsrel=1e-13, limit=200)
    s = (1.0 + y) ** -1.5
    return -4.0 / np.pi * val * s, 4.0 / np.pi * err * s


def _kernel_scale(T: float) -> float:
    return 1.0 / (math.tanh(T) * math.sqrt(2.0 * math.sinh(T)))


def kernel_k(T: float, t, tol: float = 1e-10):
    """The point-pair kernel ``k_T(t) = -(1/pi) int_0^inf v^(-1/2) Q_T'(v + t) dv``.

    After ``v = s^2`` and a rescaling of ``s`` the integral depends on ``T``
    only through ``y = (2t+1)/sinh T``.  Values come from the stored
    interpolant when its error estimate meets ``tol``, and from direct
    quadrature otherwise.

    Raises:
        QuadratureFailure: if direct quadrature cannot meet ``tol`` either.
    """
    _check_T(T)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    scale = _kernel_scale(T)
    if scale * profile_error() <= tol:
        out = scale * np.asarray(kappa(_y_of_omega(T, t)))
        return out.item() if out.ndim == 0 else out
    flat = []
    for yy in np.atleast_1d(_y_of_omega(T, t)).ravel():
        v, e = _kappa_direct(float(yy), tol / scale)
        if scale * e > tol:
            raise QuadratureFailure(f"kernel_k error {scale * e:.3g} > tol {tol}", scale * e)
        flat.append(scale * v)
    out = np.array(flat).reshape(t.shape)
    return out.item() if out.ndim == 0 else out


def kernel_k_direct(T: float, t: float, tol: float = 1e-10) -> tuple[float, float]:
    """``k_T(t)`` straight from ``-(2/pi) int_0^inf Q_T'(t + s^2) ds``.

    No rescaling and no interpolant; the tail beyond ``S`` is bounded by
    ``|Q_T'(w)| <= (2 coth T / sinh T) y^-2`` with ``y ~ 2 s^2 / sinh T``.
    Returns ``(value, error_estimate)``.
    """
    _check_T(T)
    c = 2.0 / (math.tanh(T) * math.sinh(T))
    sh = math.sinh(T)
    # |Q'(t + s^2)| <= c sh^2 / (4 s^4), so the tail past S is c sh^2 / (12 S^3)
    S = (2.0 * c * sh * sh / (3.0 * np.pi * tol)) ** (1.0 / 3.0)
    # sign change of Q' at y = 1
    knee = math.sqrt(max(0.5 * (sh - 1.0) - t, 0.0))
    pts = [p for p in (knee,) if 0.0 < p < S]
    val, err = integrate.quad(
        lambda s: q_profile_derivative(T, t + s * s), 0.0, S, points=pts or None, limit=400,
        epsabs=tol * 0.25 * np.pi / 2.0, epsrel=1e-12,
    )
    tail = c * sh * sh / (12.0 * S ** 3)
    return -2.0 / np.pi * val, 2.0 / np.pi * (err + tail)


def _sup_abs_kappa(y0: float) -> tuple[float, float]:
    """``max_{y >= y0} |kappa(y)|`` and the maximizer."""
    w0 = y0 / (1.0 + y0)
    w = np.linspace(w0, 1.0 - 1e-12, 4001)
    vals = np.abs(kappa(w / (1.0 - w)))
    i = int(np.argmax(vals))
    lo, hi = w[max(i - 1, 0)], w[min(i + 1, w.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda x: -abs(kappa(x / (1.0 - x))), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-13},
        )
        if -res.fun > vals[i]:
            return float(-res.fun), float(res.x / (1.0 - res.x))
    return float(vals[i]), float(w[i] / (1.0 - w[i]))


def kernel_sup(T: float) -> float:
    """``sup_t |k_T(t)|``."""
    _check_T(T)
    return _kernel_scale(T) * _sup_abs_kappa(1.0 / math.sinh(T))[0]


def kernel_tail_integral(T: float, t_cut: float | None = None) -> float:
    """``int_{t_cut}^inf |k_T(t)| dt`` with ``t_cut = sinh^2(2T)`` by default."""
    _check_T(T)
    sh = math.sinh(T)
    if t_cut is None:
        y_cut = math.cosh(4.0 * T) / sh
    else:
        y_cut = (2.0 * t_cut + 1.0) / sh

    # y = y_cut / v^2 maps [y_cut, inf) onto (0, 1] with a smooth integrand
    def integrand(v):
        if v == 0.0:
            return 2.0 / math.sqrt(y_cut)
        y = y_cut / (v * v)
        return abs(float(kappa(y))) * 2.0 * y_cut / v ** 3

    val, _ = integrate.quad(integrand, 0.0, 1.0, limit=200, epsabs=1e-14, epsrel=1e-11)
    return _kernel_scale(T) * 0.5 * sh * val


# ---------------------------------------------------------------------------
# generic transform steps


def fourier_h(
    g,
    r,
    tol: float = 1e-9,
    envelope: tuple[float, float] | None = None,
    support: float | None = None,
):
    """``h(r) = (1/2pi) int e^{iru} g(u) du = (1/pi) int_0^inf cos(ru) g(u) du``.

    The integral is cut at ``U``: the end of ``support`` if given, otherwise
    the point where the envelope ``|g(u)| <= C exp(-a u)`` certifies a tail
    below ``tol/2``.  Accepts a :class:`SelbergFamilyMember` in place of
    ``g``, in which case its envelope is used.

    Raises:
        QuadratureFailure: if the quadrature error plus tail exceeds ``tol``.
    """
    if isinstance(g, SelbergFamilyMember):
        envelope = envelope or g.envelope
        g = g.g
    if support is not None:
        U, tail = float(support), 0.0
    elif envelope is not None:
        Cenv, a = envelope
        U = max(0.0, math.log(2.0 * Cenv / (a * math.pi * tol)) / a)
        tail = Cenv * math.exp(-a * U) / (a * math.pi)
    else:
        raise ValueError("need a support or a decay envelope to truncate the integral")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty(r_arr.shape)
    gf = lambda u: float(g(u))
    for i, rr in enumerate(r_arr):
        if rr == 0.0:
            val, err = integrate.quad(gf, 0.0, U, epsabs=tol * 0.1, epsrel=1e-12, limit=400)
        else:
            val, err = integrate.quad(
                gf, 0.0, U, weight="cos", wvar=rr, epsabs=tol * 0.1, epsrel=1e-12, limit=400
            )
        total = (err / math.pi) + tail
        if total > tol:
            raise QuadratureFailure(f"fourier_h error {total:.3g} > tol {tol} at r={rr}", total)
        out[i] = val / math.pi
    return out.item() if np.ndim(r) == 0 else out


def abel_forward(
    k: Callable[[float], float],
    omega: float,
    support: float | None = None,
    tol: float = 1e-10,
    return_error: bool = False,
):
    """``Q(w) = int_w^inf k(t) (t - w)^(-1/2) dt = 2 int_0^sqrt(t* - w) k(w + s^2) ds``.

    ``support`` is the right end ``t*`` of the support of ``k``; ``None``
    integrates to infinity.

    Raises:
        QuadratureFailure: if the error estimate exceeds ``tol``.
    """
    if support is not None and omega >= support:
        return (0.0, 0.0) if return_error else 0.0
    upper = np.inf if support is None else math.sqrt(support - omega)
    val, err = integrate.quad(
        lambda s: float(k(omega + s * s)), 0.0, upper, epsabs=tol * 0.25, epsrel=1e-12, limit=400
    )
    val, err = 2.0 * val, 2.0 * err
    if err > tol:
        raise QuadratureFailure(f"abel_forward error {err:.3g} > tol {tol}", err)
    return (val, err) if return_error else val


def abel_inverse(
    dq: Callable[[float], float],
    t: float,
    support: float | None = None,
    tol: float = 1e-10,
    return_error: bool = False,
):
    """``k(t) = -(1/pi) int_t^inf Q'(w) (w - t)^(-1/2) dw``, via ``w = t + s^2``.

    Raises:
        QuadratureFailure: if the error estimate exceeds ``tol``.
    """
    if support is not None and t >= support:
        return (0.0, 0.0) if return_error else 0.0
    upper = np.inf if support is None else math.sqrt(support - t)
    val, err = integrate.quad(
        lambda s: float(dq(t + s * s)), 0.0, upper, epsabs=tol * 0.25, epsrel=1e-12, limit=400
    )
    val, err = -2.0 / math.pi * val, 2.0 / math.pi * err
    if err > tol:
        raise QuadratureFailure(f"abel_inverse error {err:.3g} > tol {tol}", err)
    return (val, err) if return_error else val


def abel_roundtrip(
    k: Callable[[float], float],
    support: float,
    t_points: Sequence[float],
    tol: float = 1e-11,
) -> dict:
    """Push ``k`` through ``Q = abel_forward(k)`` and back.

    ``Q`` is sampled as a piecewise Chebyshev interpolant on ``[0, support]``
    and differentiated there; the inverse transform of the derivative is
    compared with ``k`` at ``t_points``.  Meant for kernels that vanish to
    a few orders at ``support``.
    """
    q_sampled = SampledFunction.from_function(
        lambda w: np.array([abel_forward(k, float(x), support, tol) for x in w]),
        0.0,
        support,
        tol=tol,
        degree=24,
        initial_panels=4,
    )
    dq = q_sampled.derivative()
    back = np.array([abel_inverse(dq, float(t), support, tol * 10) for t in t_points])
    ref = np.array([float(k(t)) for t in t_points])
    return {
        "max_error": float(np.max(np.abs(back - ref))),
        "q_interpolation_error": q_sampled.error,
        "panels": len(q_sampled.coeffs),
        "reconstructed": back.tolist(),
        "reference": ref.tolist(),
    }


# ---------------------------------------------------------------------------
# truncated kernels


class TruncatedKernel:
    """``k_T`` cut off at ``t* = sinh^2(2T)`` (hyperbolic radius ``4T``).

    ``h`` is obtained through the chain ``k~ -> Q~ -> g~ -> h~`` for
    ``T <= chain_max_T``.  Beyond that the closed form ``h_T`` is returned
    together with the certified bound ``|h~_T - h_T| <= 1/(2 sinh T)``,
    which follows from ``int_{t*}^inf |k_T| <= 1/(4 sinh T)`` and
    ``|phi_r| <= 1`` for ``|Im r| <= 1/2``.
    """

    def __init__(self, T: float, tol: float = 1e-9, chain_max_T: float = CHAIN_MAX_T):
        if not T > 0.0:
            raise ValueError(f"T must be positive, got {T}")
        if T <= chain_max_T:
            _check_T(T)
        self.T = float(T)
        self.tol = tol
        self.chain_max_T = chain_max_T
        self._nodes = {}

    @property
    def uses_chain(self) -> bool:
        return self.T <= self.chain_max_T

    @property
    def t_star(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.sinh(2.0 * self.T) ** 2)

    @property
    def radius(self) -> float:
        """Hyperbolic radius of the support."""
        return 4.0 * self.T

    @property
    def certified_bound(self) -> float:
        e = math.exp(-self.T)
        return e / (1.0 - e * e)

    def k(self, t):
        """Truncated kernel values."""
        t = np.asarray(t, dtype=float)
        inside = t <= self.t_star
        vals = kernel_k(self.T, np.where(inside, t, 0.0), tol=max(self.tol * 1e-3, 1e-14))
        out = np.where(inside, vals, 0.0)
        return out.item() if out.ndim == 0 else out

    def _q_from_y(self, y: np.ndarray, order: int) -> np.ndarray:
        T = self.T
        sh = math.sinh(T)
        y_star = math.cosh(4.0 * T) / sh
        phimax = np.arctan(np.sqrt(np.maximum(y_star - y, 0.0) / (1.0 + y)))
        x, wts = gauss_legendre(order)
        phi = phimax[:, None] * x[None, :]
        wx = 1.0 - np.cos(phi) ** 2 / (1.0 + y)[:, None]
        integrand = _G(wx) * np.cos(phi)
        return (integrand @ wts) * phimax / (1.0 + y) / math.tanh(T)

    def q(self, omega, order: int = 48):
        """``Q~(w) = coth T / (1 + y) int_0^phimax G(1 - cos^2 phi/(1+y)) cos phi dphi``.

        This is ``int_w^{t*} k_T(t) (t - w)^(-1/2) dt`` after
        ``t = w + s^2``, ``s ~ sqrt(1+y) tan(phi)``; the integrand is smooth.
        """
        y = np.atleast_1d(_y_of_omega(self.T, omega))
        out = self._q_from_y(y, order)
        return out.item() if np.ndim(omega) == 0 else out

    def q_error(self, omega) -> float:
        y = np.atleast_1d(_y_of_omega(self.T, omega))
        return float(np.max(np.abs(self._q_from_y(y, 48) - self._q_from_y(y, 32))))

    def g(self, u):
        """``g~(u) = 2 Q~(sinh^2(u/2))`` supported on ``|u| <= 4T``."""
        u = np.abs(np.asarray(u, dtype=float))
        inside = u < 4.0 * self.T
        y = np.cosh(np.where(inside, u, 0.0)) / math.sinh(self.T)
        out = np.where(inside, 2.0 * self._q_from_y(np.atleast_1d(y).ravel(), 48).reshape(y.shape), 0.0)
        return out.item() if out.ndim == 0 else out

    def _chain_nodes(self, panels: int):
        if panels not in self._nodes:
            T = self.T
            res = []
            for order in (20, 30):
                x, w = gauss_legendre(order)
                edges = np.linspace(0.0, 1.0, panels + 1)
                xi = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * x[None, :]).ravel()
                wt = np.tile(w, panels) / panels
                u = 4.0 * T * (1.0 - (1.0 - xi) ** 2)
                du = 8.0 * T * (1.0 - xi)
                y = np.cosh(u) / math.sinh(T)
                g = 2.0 * self._q_from_y(y, 48)
                res.append((u, wt * du * g / math.pi))
            self._nodes[panels] = res
        return self._nodes[panels]

    def _panels_for(self, rmax: float) -> int:
        return int(max(16, math.ceil(8.0 * self.T * (1.0 + rmax) / 6.0)))

    def h_chain(self, r, untempered: bool = False) -> tuple[np.ndarray, float]:
        """Chain transform and its error estimate (difference of two rules).

        The tolerance is relative to ``max(1, |h|)``, since untempered values
        grow like ``e^{T/2}``.

        With ``untempered=True`` the argument is ``s`` for ``r = i s`` and the
        cosine becomes ``cosh(s u)``.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        rmax = float(np.max(np.abs(r))) if r.size else 0.0
        panels = self._panels_for(0.0 if untempered else rmax)
        vals = []
        for u, wq in self._chain_nodes(panels):
            kern = np.cosh(np.outer(r, u)) if untempered else np.cos(np.outer(r, u))
            vals.append(kern @ wq)
        err = float(np.max(np.abs(vals[1] - vals[0]))) if r.size else 0.0
        # q-level and profile errors, integrated against |cos| over [0, 4T]
        err += 8.0 * self.T / math.pi * (profile_error() / math.tanh(self.T) + 1e-13)
        scale = max(1.0, float(np.max(np.abs(vals[1])))) if r.size else 1.0
        if err > self.tol * scale:
            raise QuadratureFailure(f"chain error {err:.3g} > tol {self.tol} at T={self.T}", err)
        return vals[1], err

    def h(self, r):
        """``h~_T`` at real ``r``."""
        if self.uses_chain:
            vals, _ = self.h_chain(r)
        else:
            vals = np.atleast_1d(h_family(self.T, r))
        return vals.item() if np.ndim(r) == 0 else vals

    def h_untempered(self, s):
        """``h~_T(i s)`` for ``|s| <= 1/2``."""
        if self.uses_chain:
            vals, _ = self.h_chain(s, untempered=True)
        else:
            vals = np.atleast_1d(h_family_untempered(self.T, s))
        return vals.item() if np.ndim(s) == 0 else vals

    def error(self, r=None) -> float:
        """Bound on ``|returned h - true h~|``."""
        if self.uses_chain:
            return self.h_chain(0.0 if r is None else r)[1]
        return self.certified_bound


@lru_cache(maxsize=256)
def _truncated(T: float, tol: float, chain_max_T: float) -> TruncatedKernel:
    return TruncatedKernel(T, tol, chain_max_T)


def truncated_transform(T: float, r_grid, tol: float = 1e-9) -> dict:
    """``h~_T`` on ``r_grid`` through the full chain, with deviation from ``h_T``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    tk = TruncatedKernel(T, tol, chain_max_T=max(CHAIN_MAX_T, T))
    r = np.asarray(r_grid, dtype=float)
    vals, err = tk.h_chain(r)
    dev = np.abs(vals - h_family(T, r))
    return {
        "T": T,
        "h": vals,
        "max_deviation": float(np.max(dev)),
        "quadrature_error": err,
        "certified_bound": tk.certified_bound,
    }


# ---------------------------------------------------------------------------
# the combined kernel


@dataclass
class CombinedKernel:
    """``k_{L,T} = sum_{j=1}^{2L} ((2L - j)/L) k~_{2jT}`` with ``2T = q'``."""

    eta: float
    N: int
    r_target: float
    untempered: bool
    L: int
    Q: int
    q: int
    l: int
    q_prime: int
    T: float
    weights: tuple
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    tol: float = 1e-9
    chain_max_T: float = CHAIN_MAX_T

    def _terms(self):
        return [(_truncated(float(t), self.tol, self.chain_max_T), float(w)) for t, w in self.weights]

    @property
    def support_radius(self) -> float:
        """Hyperbolic radius of the support of ``k_{L,T}``."""
        return max(4.0 * t for t, _ in self.weights)

    def h(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return sum(w * np.atleast_1d(tk.h(r)) for tk, w in self._terms())

    def h_error(self, r) -> float:
        return sum(w * tk.error(r) for tk, w in self._terms())

    def h_untempered(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return sum(w * np.atleast_1d(tk.h_untempered(s)) for tk, w in self._terms())

    def h_closed(self, r) -> np.ndarray:
        """``(F_{2L}(q' r) - 1) / cosh(pi r/2)``, the untruncated transform."""
        r = np.asarray(r, dtype=float)
        e = np.exp(-0.5 * np.pi * np.abs(r))
        return (fejer(2 * self.L, self.q_prime * r) - 1.0) * 2.0 * e / (1.0 + e * e)

    def k(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return sum(w * np.asarray(tk.k(t)) for tk, w in self._terms())

    def sup_norm(self) -> float:
        """``sup_t |k_{L,T}(t)|`` on a grid in ``log(1+t)`` refined at the maximum."""
        s_max = 2.0 * self.support_radius / 4.0 + 1.0
        s = np.linspace(0.0, min(s_max, 700.0), 20001)
        t = np.expm1(s)
        vals = np.abs(self.k(t))
        i = int(np.argmax(vals))
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        res = optimize.minimize_scalar(
            lambda x: -abs(float(self.k(math.expm1(x)))), bounds=(lo, hi), method="bounded"
        )
        return float(max(vals[i], -res.fun))

    def to_json(self) -> dict:
        return {
            "eta": self.eta,
            "N": self.N,
            "r_target": self.r_target,
            "untempered": self.untempered,
            "L": self.L,
            "Q": self.Q,
            "q": self.q,
            "l": self.l,
            "q_prime": self.q_prime,
            "T": self.T,
            "weights": [[t, str(w)] for t, w in self.weights],
            "support_radius": self.support_radius,
            "checks": dict(self.checks),
            "info": dict(self.info),
        }


def design_hyperbolic_kernel(
    eta: float,
    N: int,
    r_target: float,
    untempered: bool = False,
    r_bound: float = 10.0,
    tol: float = 1e-9,
    chain_max_T: float = CHAIN_MAX_T,
) -> CombinedKernel:
    """Fejér combination of truncated kernels peaked at ``r_target``.

    ``L = ceil(1/eta)``, ``Q = ceil(N eta/8)``; ``q'`` comes from the same
    Dirichlet recipe as on the tree applied to ``theta0 = r_target mod 2pi``
    and ``T = q'/2``.  For an untempered target (``r = i r_target``) the
    phase is zero.

    Raises:
        EtaOutOfRange: unless ``0 < eta < 1/2``.
        NTooSmall: if a side condition fails; ``exc.checks`` lists them.
    """
    if not 0.0 < eta < 0.5:
        raise EtaOutOfRange(f"eta must lie in (0, 1/2), got {eta}")
    if untempered:
        if abs(r_target) > 0.5:
            raise ValueError("untempered targets need |r_target| <= 1/2")
        theta0 = 0.0
    else:
        if abs(r_target) > r_bound:
            raise ValueError(f"|r_target| must be at most {r_bound}")
        theta0 = math.fmod(abs(r_target), 2.0 * math.pi)
    L = math.ceil(1.0 / eta)
    Q = math.ceil(N * eta / 8.0)
    q = dirichlet_search(theta0, Q)
    lo, hi = Q * eta / 128.0, Q * eta / 64.0
    checks = {"L_at_least_2": L >= 2}
    if q >= lo:
        l = 1
        checks["multiple_in_window"] = True
    else:
        l = math.ceil(lo / q)
        checks["multiple_in_window"] = l * q <= hi
    q_prime = 2 * l * q
    phase = abs(math.remainder(q_prime * theta0, 2.0 * math.pi))
    x_max = phase + q_prime / (2.0 * N)
    checks.update(
        {
            "q_prime_range": Q * eta / 64.0 <= q_prime <= 2 * Q,
            "phase_small": phase < math.pi * eta / 16.0,
            "window_inside_main_lobe": x_max < math.pi / L,
            "support_fits": 8 * L * q_prime < 2 * N,
        }
    )
    fejer_min = float(fejer(2 * L, x_max) - 1.0)
    r_edge = abs(r_target) + 1.0 / (2 * N)
    info = {
        "phase": phase,
        "x_max": x_max,
        "window_fejer_min": fejer_min,
        "predicted_window_min": fejer_min / math.cosh(0.5 * math.pi * r_edge) if not untempered else None,
        "two_l_small": 2 * l < Q * eta / 32.0,
        "Q_eta_large": Q * eta > 64.0,
    }
    if not all(checks.values()):
        failed = [k for k, v in checks.items() if not v]
        raise NTooSmall(
            f"hyperbolic design infeasible for eta={eta}, N={N}, r={r_target}: {', '.join(failed)}",
            checks,
        )
    T = q_prime / 2.0
    weights = tuple((j * q_prime, Fraction(2 * L - j, L)) for j in range(1, 2 * L))
    return CombinedKernel(
        eta, N, float(r_target), untempered, L, Q, q, l, q_prime, T, weights, checks, info, tol, chain_max_T
    )


@dataclass(frozen=True)
class HyperbolicReport:
    """Measured properties of a combined kernel."""

    support_radius: float
    support_ok: bool
    window: tuple[float, float]
    window_min: float
    window_c: float
    window_ok: bool
    global_min: float
    global_min_at: float
    untempered_min: float
    untempered_ok: bool
    sup_norm: float
    sup_constant: float
    quadrature_error: float

    @property
    def C0(self) -> float:
        return max(0.0, -self.global_min)

    def to_json(self) -> dict:
        return {
            "support_radius": self.support_radius,
            "support_ok": self.support_ok,
            "window": list(self.window),
            "window_min": self.window_min,
            "window_c": self.window_c,
            "window_ok": self.window_ok,
            "global_min": self.global_min,
            "global_min_at": self.global_min_at,
            "C0": self.C0,
            "untempered_min": self.untempered_min,
            "untempered_ok": self.untempered_ok,
            "sup_norm": self.sup_norm,
            "sup_constant": self.sup_constant,
            "quadrature_error": self.quadrature_error,
        }


def verify_hyperbolic(
    kernel: CombinedKernel,
    r_max: float = 12.0,
    grid_size: int = 4001,
    window_size: int = 65,
    untempered_size: int = 65,
    window_factor: float = 0.5,
) -> HyperbolicReport:
    """Window amplitude, global lower bound, untempered size and sup norm.

    Window and global values are certified lower values: the chain error
    or the truncation bound is subtracted.  ``window_ok`` asks for
    ``h >= window_factor / eta`` on ``|r - r_target| < 1/(2N)``.
    """
    half = 1.0 / (2 * kernel.N)
    if kernel.untempered:
        lo, hi = max(0.0, abs(kernel.r_target) - half), min(0.5, abs(kernel.r_target) + half)
        win_vals = kernel.h_untempered(np.linspace(lo, hi, window_size))
    else:
        lo, hi = abs(kernel.r_target) - half, abs(kernel.r_target) + half
        win_vals = kernel.h(np.linspace(lo, hi, window_size))
    err_win = kernel.h_error(np.array([lo, hi]))
    window_min = float(np.min(win_vals)) - err_win
    r = np.linspace(0.0, r_max, grid_size)
    hr = kernel.h(r)
    err_glob = kernel.h_error(r)
    i = int(np.argmin(hr))
    # beyond r_max every term is below its truncation bound plus e^{-pi r_max/2}
    tail_floor = -sum(float(w) * (2.0 * math.exp(-0.5 * math.pi * r_max)) for _, w in kernel.weights)
    global_min = min(float(hr[i]) - err_glob, tail_floor - err_glob)
    s = np.linspace(0.0, 0.5, untempered_size)
    hu = kernel.h_untempered(s)
    untempered_min = float(np.min(hu)) - kernel.h_error(np.array([0.0]))
    sup = kernel.sup_norm()
    return HyperbolicReport(
        support_radius=kernel.support_radius,
        support_ok=kernel.support_radius < 2 * kernel.N,
        window=(lo, hi),
        window_min=window_min,
        window_c=window_min * kernel.eta,
        window_ok=window_min >= window_factor / kernel.eta,
        global_min=global_min,
        global_min_at=float(r[i]),
        untempered_min=untempered_min,
        untempered_ok=untempered_min > kernel.L,
        sup_norm=sup,
        sup_constant=sup * math.exp(kernel.T),
        quadrature_error=max(err_win, err_glob),
    )


def combined_sup_sweep(L: int, T_values: Sequence[float], tol: float = 1e-9) -> dict:
    """``sup |k_{L,T}|`` over ``T`` with the fitted exponent of ``e^{aT}``."""
    sups = []
    for T in T_values:
        weights = tuple((2.0 * j * T, Fraction(2 * L - j, L)) for j in range(1, 2 * L))
        ck = CombinedKernel(0.0, 0, 0.0, False, L, 0, 0, 0, 0, float(T), weights, tol=tol)
        sups.append(ck.sup_norm())
    T_arr = np.asarray(T_values, dtype=float)
    slope = float(np.polyfit(T_arr, np.log(sups), 1)[0])
    consts = [s * math.exp(T) for s, T in zip(sups, T_arr)]
    return {
        "L": L,
        "T_sweep": T_arr.tolist(),
        "sup_norm": sups,
        "fitted_exponent": slope,
        "fitted_constant": max(consts),
        "constants": consts,
    }


# ---------------------------------------------------------------------------
# recurrence kernel and annuli


@dataclass(frozen=True)
class RecurrenceAmplification:
    r_star: float
    untempered: bool
    L: int
    q: int
    h_value: float
    error: float

    @property
    def c(self) -> float:
        return self.h_value / self.L

    def to_json(self) -> dict:
        return {
            "r_star": self.r_star,
            "untempered": self.untempered,
            "L": self.L,
            "q": self.q,
            "h_value": self.h_value,
            "c": self.c,
            "error": self.error,
        }


def recurrence_amplification(
    r_star: float,
    L: int,
    untempered: bool = False,
    tol: float = 1e-9,
    chain_max_T: float = CHAIN_MAX_T,
) -> RecurrenceAmplification:
    """``h(r*) = sum_{l=1}^{L} h~_{2ql}(r*)`` with ``|q r* mod 2pi| <= pi/(50L)``.

    ``q`` is the smallest such value in ``1..100L``; for an untempered
    ``r* = i s`` every term is at least about 1 and ``q = 1``.
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    if untempered:
        if abs(r_star) > 0.5:
            raise ValueError("untempered r* needs |r*| <= 1/2")
        q = 1
    else:
        bound = math.pi / (50 * L)
        q = next(
            (q for q in range(1, 100 * L + 1) if abs(math.remainder(q * r_star, 2.0 * math.pi)) <= bound),
            None,
        )
        if q is None:
            raise AssertionError(f"recurrence search exhausted for r*={r_star}")
    total, err = 0.0, 0.0
    for l in range(1, L + 1):
        tk = _truncated(float(2 * q * l), tol, chain_max_T)
        val = tk.h_untempered(abs(r_star)) if untempered else tk.h(r_star)
        total += float(val)
        err += tk.error(np.array([abs(r_star)])) if tk.uses_chain else tk.certified_bound
    return RecurrenceAmplification(float(r_star), untempered, L, q, total, err)


def annuli(q: int, L: int) -> list[tuple[float, float]]:
    """``t``-ranges ``A_0 = [0, cosh 2q]``, ``A_l = (cosh 2lq, cosh 2(l+1)q]``,
    ``A_L = (cosh 2Lq, sinh^2(4qL)]``; a range with ``lo >= hi`` is empty."""
    out = [(0.0, math.cosh(2.0 * q))]
    for l in range(1, L):
        out.append((math.cosh(2.0 * l * q), math.cosh(2.0 * (l + 1) * q)))
    out.append((math.cosh(2.0 * L * q), math.sinh(4.0 * q * L) ** 2))
    return out


@dataclass(frozen=True)
class AnnuliReport:
    q: int
    L: int
    annuli: tuple
    values: tuple
    errors: tuple

    @property
    def max_value(self) -> float:
        return max(self.values)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "L": self.L,
            "annuli": [list(a) for a in self.annuli],
            "values": list(self.values),
            "errors": list(self.errors),
            "max_value": self.max_value,
        }


def verify_annuli_bounds(q: int, L: int, tol: float = 1e-8) -> AnnuliReport:
    """``2 pi int_A |k(t)|^2 dt`` per annulus for ``k = sum_l k~_{2ql}``.

    The integral runs in ``s = log(1 + t)`` with breakpoints at the cutoffs
    and kernel peaks of the constituent terms.

    Raises:
        QuadratureFailure: if an annulus misses ``tol``.
    """
    terms = [_truncated(float(2 * q * l), 1e-9, CHAIN_MAX_T) for l in range(1, L + 1)]

    def k(t):
        return sum(tk.k(t) for tk in terms)

    marks = []
    for tk in terms:
        marks.append(math.log1p(tk.t_star))
        marks.append(math.log1p(0.5 * math.sinh(tk.T)))
    vals, errs = [], []
    for lo, hi in annuli(q, L):
        if not hi > lo:
            vals.append(0.0)
            errs.append(0.0)
            continue
        a, b = math.log1p(lo), math.log1p(hi)
        pts = sorted({round(m, 12) for m in marks if a < m < b})
        val, err = integrate.quad(
            lambda s: float(k(math.expm1(s))) ** 2 * math.exp(s),
            a, b, points=pts or None, limit=1000, epsabs=tol * 0.1, epsrel=1e-10,
        )
        val, err = 2.0 * math.pi * val, 2.0 * math.pi * err
        if err > tol * max(1.0, val):
            raise QuadratureFailure(f"annulus [{lo:.3g}, {hi:.3g}] error {err:.3g}", err)
        vals.append(val)
        errs.append(err)
    return AnnuliReport(q, L, tuple(annuli(q, L)), tuple(vals), tuple(errs))


# ---------------------------------------------------------------------------
# sweeps


def _slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, float), np.log(np.asarray(y, float)), 1)[0])


def selberg_sweep(T_values: Sequence[float]) -> dict:
    """Sup norm and tail mass of ``k_T`` across ``T`` with fitted exponents."""
    rows = []
    for T in T_values:
        sup = kernel_sup(T)
        tail = kernel_tail_integral(T)
        ch = math.cosh(T)
        # plateau region t <= cosh T and decay region t >= cosh T
        t_in = np.concatenate([[0.0], np.geomspace(1e-6, ch, 400)])
        t_out = np.geomspace(ch, ch * 1e8, 400)
        plateau = float(np.max(np.abs(kernel_k(T, t_in)))) * math.sqrt(ch)
        decay = float(np.max(np.abs(kernel_k(T, t_out)) * t_out ** 1.5)) / ch
        rows.append(
            {
                "T": float(T),
                "sup_norm": sup,
                "sup_scaled": sup * math.exp(T / 2.0),
                "tail_integral": tail,
                "tail_scaled": tail * math.exp(T),
                "plateau_constant": plateau,
                "decay_constant": decay,
            }
        )
    Ts = [r["T"] for r in rows]
    return {
        "T_sweep": Ts,
        "rows": rows,
        "sup_fitted_constant": max(r["sup_scaled"] for r in rows),
        "sup_fitted_exponent": _slope(Ts, [r["sup_norm"] for r in rows]),
        "tail_fitted_constant": max(r["tail_scaled"] for r in rows),
        "tail_fitted_exponent": _slope(Ts, [r["tail_integral"] for r in rows]),
        "plateau_constant": max(r["plateau_constant"] for r in rows),
        "decay_constant": max(r["decay_constant"] for r in rows),
        "quadrature_error": profile_error(),
    }


def truncation_sweep(T_values: Sequence[float], r_grid=None, tol: float = 1e-9) -> dict:
    """``max_r |h~_T(r) - h_T(r)|`` across ``T`` with fitted ``C e^{aT}``."""
    r = np.linspace(0.0, 5.0, 51) if r_grid is None else np.asarray(r_grid, dtype=float)
    rows = []
    for T in T_values:
        res = truncated_transform(T, r, tol)
        rows.append(
            {
                "T": float(T),
                "max_deviation": res["max_deviation"],
                "scaled": res["max_deviation"] * math.exp(T),
                "certified_bound": res["certified_bound"],
                "quadrature_error": res["quadrature_error"],
            }
        )
    Ts = [row["T"] for row in rows]
    return {
        "T_sweep": Ts,
        "rows": rows,
        "fitted_constant": max(row["scaled"] for row in rows),
        "fitted_exponent": _slope(Ts, [row["max_deviation"] for row in rows]),
        "max_deviation": max(row["max_deviation"] for row in rows),
        "quadrature_error": max(row["quadrature_error"] for row in rows),
    }


def _poly_kernel(t: float) -> float:
    return (1.0 - t / 3.0) ** 6 if t < 3.0 else 0.0


def _exp_kernel(t: float) -> float:
    return math.exp(-t) * (1.0 - t / 5.0) ** 5 if t < 5.0 else 0.0


def _bump_kernel(t: float) -> float:
    return math.exp(-1.0 / (1.0 - (t / 2.0) ** 2)) if t < 2.0 else 0.0


# name -> (kernel, right end of support)
SYNTHETIC_KERNELS = {
    "poly": (_poly_kernel, 3.0),
    "exp": (_exp_kernel, 5.0),
    "bump": (_bump_kernel, 2.0),
}


def abel_roundtrip_suite(points: int = 10, tol: float = 1e-11) -> dict:
    """Abel roundtrip of every synthetic kernel on ``points`` interior nodes."""
    out = {}
    for name, (k, a) in SYNTHETIC_KERNELS.items():
        res = abel_roundtrip(k, a, np.linspace(0.0, a, points + 1)[:-1], tol)
        out[name] = {key: res[key] for key in ("max_error", "q_interpolation_error", "panels")}
    return {"kernels": out, "max_error": max(v["max_error"] for v in out.values())}


def selberg_roundtrip(
    T_values: Sequence[float], r_points: int = 64, r_max: float = 8.0, tol: float = 1e-9
) -> dict:
    """``max_r |fourier_h(g_T, r) - h_T(r)|`` for each ``T``."""
    r = np.linspace(0.0, r_max, r_points)
    rows = []
    for T in T_values:
        h_num = fourier_h(SelbergFamilyMember(float(T)), r, tol)
        rows.append({"T": float(T), "max_deviation": float(np.max(np.abs(h_num - h_family(T, r))))})
    return {
        "r_points": r_points,
        "r_max": r_max,
        "rows": rows,
        "max_deviation": max(row["max_deviation"] for row in rows),
    }
