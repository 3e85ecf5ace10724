"""Spherical transform on the Hecke tree and Fejér-window kernel design.

A radial kernel ``k`` acts on the radial ``T_p``-eigenfunction of eigenvalue
``lambda = 2 cos(theta)`` by a scalar ``h_k(theta)``.  Kernels built as
combinations ``sum_j w_j P_{t_j}(T_p/2) delta_0`` have
``h(theta) = sum_j w_j cos(t_j theta)``, so Fejér weights turn ``h`` into a
shifted Fejér kernel concentrated near a chosen ``theta0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
from gmpy2 import mpq

from .errors import EtaOutOfRange, NTooSmall, OutOfSpectrum
from .tree_core import RadialFunction, delta_at_root
from .wave import cheb_eval, chebyshev_operator_sequence

__all__ = [
    "KernelDesign",
    "PropertyReport",
    "RecurrenceKernel",
    "SpectralPoint",
    "design_kernel",
    "dirichlet_search",
    "fejer",
    "fejer_h",
    "fit_decay_constant",
    "kernel_from_propagators",
    "kernel_from_propagators_operator",
    "recurrence_kernel",
    "spherical_eigenfunction",
    "spherical_transform",
    "spherical_transform_grid",
    "untempered_betas",
    "verify_design",
]

TEMPERED = "tempered"
UNTEMPERED_POS = "untempered_positive"
UNTEMPERED_NEG = "untempered_negative"
_KINDS = (TEMPERED, UNTEMPERED_POS, UNTEMPERED_NEG)

# Strictness margin for the Dirichlet inequality; keeps exact rational
# phases such as 2*pi*k/Q from passing or failing on float noise.
_STRICT = 1e-12


def _spectral_radius(p: int) -> float:
    return (p + 1) / math.sqrt(p)


@dataclass(frozen=True)
class SpectralPoint:
    """A point of the ``T_p`` spectrum, ``lambda = 2 cos(theta)``.

    ``parameter`` is ``theta`` in ``[0, pi]`` when tempered and ``beta > 0``
    otherwise, with ``theta = i beta`` (positive) or ``theta = pi + i beta``
    (negative).
    """

    kind: str
    parameter: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.kind == TEMPERED:
            if not 0.0 <= self.parameter <= math.pi:
                raise ValueError("tempered theta must lie in [0, pi]")
        elif not self.parameter > 0.0:
            raise ValueError("untempered beta must be positive")

    @property
    def eigenvalue(self) -> float:
        if self.kind == TEMPERED:
            return 2.0 * math.cos(self.parameter)
        c = 2.0 * math.cosh(self.parameter)
        return c if self.kind == UNTEMPERED_POS else -c

    @classmethod
    def tempered(cls, theta: float) -> "SpectralPoint":
        return cls(TEMPERED, float(theta))

    @classmethod
    def from_eigenvalue(cls, lam: float, p: int | None = None) -> "SpectralPoint":
        """Invert ``lambda = 2 cos(theta)``.

        Raises:
            OutOfSpectrum: if ``p`` is given and ``|lam| > (p+1)/sqrt(p)``.
        """
        lam = float(lam)
        if p is not None and abs(lam) > _spectral_radius(p) * (1 + 1e-14):
            raise OutOfSpectrum(f"|lambda|={abs(lam)} exceeds (p+1)/sqrt(p) for p={p}")
        if abs(lam) <= 2.0:
            return cls(TEMPERED, math.acos(lam / 2.0))
        beta = math.acosh(abs(lam) / 2.0)
        return cls(UNTEMPERED_POS if lam > 0 else UNTEMPERED_NEG, beta)


def _as_lambdas(points) -> np.ndarray:
    if isinstance(points, SpectralPoint):
        return np.array([points.eigenvalue])
    return np.array(
        [pt.eigenvalue if isinstance(pt, SpectralPoint) else float(pt) for pt in points]
    )


def _scaled_eigenfunction(p: int, lam: np.ndarray, R: int) -> np.ndarray:
    """Rows ``psi_d = p^(d/2) phi_d`` for ``d = 0..R``.

    The scaling turns the radial eigen-recursion into the Chebyshev-like
    ``psi_{d+1} = lambda psi_d - psi_{d-1}``, which stays bounded on the
    tempered spectrum.
    """
    psi = np.empty((R + 1, lam.size))
    psi[0] = 1.0
    if R >= 1:
        psi[1] = lam * p / (p + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        for d in range(1, R):
            psi[d + 1] = lam * psi[d] - psi[d - 1]
    return psi


def spherical_eigenfunction(p: int, point: SpectralPoint, R: int) -> np.ndarray:
    """Radial eigenfunction ``phi[0..R]`` of ``T_p`` with ``phi[0] = 1``."""
    if R < 1:
        raise ValueError("R must be at least 1")
    lam = _as_lambdas(point)
    psi = _scaled_eigenfunction(p, lam, R)[:, 0]
    scale = np.sqrt(float(p)) ** -np.arange(R + 1)
    return psi * scale


def _scaled_coefficients(kernel: RadialFunction) -> np.ndarray:
    """Float values of ``sizes[d] * p^(-d/2) * k[d] * p^(d/2)`` folded for ``psi_d``.

    Returns ``c_d`` with ``h = sum_d c_d psi_d``.  The product
    ``k[d] p^(d/2)`` is formed exactly before rounding, so tiny kernel values
    do not underflow.
    """
    p = kernel.p
    R = kernel.support_radius()
    out = np.zeros(max(R, 0) + 1)
    for d in range(R + 1):
        u, v = kernel.u[d], kernel.v[d]
        if not (u or v):
            continue
        half = p ** (d // 2)
        if d % 2 == 0:
            a = float(u * half) + float(v * half) * math.sqrt(p)
        else:
            # (u + v sqrt p) * p^(d//2) * sqrt p
            a = float(v * half * p) + float(u * half) * math.sqrt(p)
        out[d] = a if d == 0 else a * (p + 1) / p
    return out


def spherical_transform_grid(kernel: RadialFunction, points) -> np.ndarray:
    """``h_k`` at many spectral points (or raw eigenvalues) at once."""
    lam = _as_lambdas(points)
    c = _scaled_coefficients(kernel)
    psi = _scaled_eigenfunction(kernel.p, lam, c.size - 1)
    with np.errstate(over="ignore", invalid="ignore"):
        return c @ psi


def spherical_transform(kernel: RadialFunction, point: SpectralPoint) -> float:
    """``h_k(theta) = sum_d kernel[d] * |S_d| * phi_theta(d)``."""
    if kernel.support_radius() < 0:
        return 0.0
    return float(spherical_transform_grid(kernel, [point])[0])


def fejer(L: int, x):
    """Fejér kernel ``(1/L) (sin(L x/2) / sin(x/2))^2`` with value ``L`` at 0 mod 2 pi."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sin(L * x / 2.0) / s) ** 2 / L
    val = np.where(np.abs(s) < 1e-12, float(L), val)
    return val.item() if val.ndim == 0 else val


def fejer_h(coefficients: Sequence[tuple[int, Fraction]], lam) -> np.ndarray:
    """Closed form ``sum_j w_j P_{t_j}(lambda/2)`` for a propagator combination."""
    x = np.asarray(lam, dtype=float) / 2.0
    out = np.zeros_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for t, w in coefficients:
            out = out + float(w) * cheb_eval("first", t, x)
    return out


def kernel_from_propagators(
    p: int, coefficients: Sequence[tuple[int, Fraction]], R: int
) -> RadialFunction:
    """Exact ``sum_j w_j P_{t_j}(T_p/2) delta_0`` using the propagation closed form.

    All times must be even.  At even distance ``d`` the value is
    ``(1-p) * sum_{t > d} c_t + c_d`` with ``c_t = w_t / (2 p^(t/2))``; a
    time-0 term contributes its weight at the root.
    """
    c = {}
    for t, w in coefficients:
        if t < 0 or t % 2:
            raise ValueError(f"propagation times must be even and >= 0, got {t}")
        if t > R:
            raise ValueError(f"time {t} exceeds radius {R}")
        c[t] = c.get(t, mpq(0)) + mpq(w)
    vals = [mpq(0)] * (R + 1)
    tail = mpq(0)  # sum of c_t over t > d
    for d in range(R - (R % 2), -1, -2):
        if d in c:
            if d == 0:
                vals[0] = c[0] + (1 - p) * tail
                break
            cd = c[d] / (2 * mpq(p) ** (d // 2))
            vals[d] = (1 - p) * tail + cd
            tail += cd
        else:
            vals[d] = (1 - p) * tail
    return RadialFunction(p, tuple(vals), (mpq(0),) * (R + 1))


def kernel_from_propagators_operator(
    p: int, coefficients: Sequence[tuple[int, Fraction]], R: int
) -> RadialFunction:
    """Same kernel as :func:`kernel_from_propagators`, via the operator recursion.

    Independent of the closed form; quadratic in ``R``, so meant for tests.
    """
    want = {}
    for t, w in coefficients:
        want[t] = want.get(t, Fraction(0)) + Fraction(w)
    acc = RadialFunction.zeros(p, R)
    top = max(want, default=-1)
    if top < 0:
        return acc
    for t, g in enumerate(chebyshev_operator_sequence("first", delta_at_root(p, R + 1))):
        if t in want:
            acc = acc + g.extend(R).scale(want[t])
        if t >= top:
            break
    return acc


def dirichlet_search(theta0: float, Q: int) -> int:
    """Smallest ``q`` in ``1..Q`` with ``|q theta0 mod 2pi| < 2pi/Q``.

    The residue is folded into ``(-pi, pi]``.  Existence is Dirichlet's
    approximation theorem; exhausting the range is a bug.
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    bound = 2.0 * math.pi / Q
    for q in range(1, Q + 1):
        if abs(math.remainder(q * theta0, 2.0 * math.pi)) < bound - _STRICT:
            return q
    # the pigeonhole argument guarantees q <= Q; only rounding can land here
    for q in range(1, Q + 1):
        if abs(math.remainder(q * theta0, 2.0 * math.pi)) <= bound:
            return q
    raise AssertionError(f"Dirichlet search exhausted for theta0={theta0}, Q={Q}")


@dataclass(frozen=True)
class KernelDesign:
    """A designed tree kernel whose transform is a shifted Fejér window."""

    p: int
    eta: float
    N: int
    theta0: float
    branch: str
    L: int
    Q: int | None
    q: int
    l: int
    q_prime: int
    coefficients: tuple
    kernel: RadialFunction = field(repr=False)
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def window(self) -> tuple[float, float]:
        half = 1.0 / (2 * self.N)
        return (max(0.0, self.theta0 - half), min(math.pi, self.theta0 + half))

    @property
    def weight_sum(self) -> float:
        return float(sum(w for _, w in self.coefficients))

    @property
    def max_time(self) -> int:
        return max(t for t, _ in self.coefficients)

    def h(self, points) -> np.ndarray:
        """Spherical transform of the radial kernel."""
        return spherical_transform_grid(self.kernel, points)

    def h_closed(self, lam) -> np.ndarray:
        """Analytic transform ``sum_j w_j P_{j q'}(lambda/2)``."""
        return fejer_h(self.coefficients, lam)

    def fejer_form(self, theta) -> np.ndarray:
        """``F(q' theta) - 1`` on the tempered spectrum."""
        order = self.L if self.branch == "simple" else 2 * self.L
        return fejer(order, self.q_prime * np.asarray(theta, dtype=float)) - 1.0

    @cached_property
    def sup_norm(self) -> float:
        return max(float(abs(x)) for x in self.kernel.values)

    @property
    def delta_measured(self) -> float:
        """Normalized decay exponent; see :func:`verify_design`."""
        return _delta_hat(self)[0]

    def to_json(self, include_kernel: bool = False) -> dict:
        out = {
            "p": self.p,
            "eta": self.eta,
            "N": self.N,
            "theta0": self.theta0,
            "branch": self.branch,
            "L": self.L,
            "Q": self.Q,
            "q": self.q,
            "l": self.l,
            "q_prime": self.q_prime,
            "coefficients": [[t, str(w)] for t, w in self.coefficients],
            "checks": dict(self.checks),
            "info": dict(self.info),
        }
        if include_kernel:
            out["kernel"] = self.kernel.to_json()
        return out


def _check_eta(eta: float):
    if not 0.0 < eta < 0.5:
        raise EtaOutOfRange(f"eta must lie in (0, 1/2), got {eta}")


def _simple_design(p, eta, N, theta0, endpoint_dist):
    L = math.floor(1.0 / eta) + 2
    q = 2 * (N // (2 * L))
    checks = {"q_positive": q >= 2, "support_fits": L * q <= N}
    x_max = q * (endpoint_dist + 1.0 / (2 * N))
    checks["window_inside_main_lobe"] = x_max < 2.0 * math.pi / L
    window_value = fejer(L, x_max) - 1.0
    checks["window_amplitude"] = bool(window_value >= 1.0 / eta)
    info = {"window_fejer_min": window_value, "x_max": x_max, "delta_simple": q / (2.0 * N)}
    if not all(checks.values()):
        raise NTooSmall(f"simple-branch design infeasible for N={N}, eta={eta}", checks)
    coeffs = tuple((j * q, Fraction(2 * (L - j), L)) for j in range(1, L))
    kernel = kernel_from_propagators(p, coeffs, N)
    return KernelDesign(p, eta, N, theta0, "simple", L, None, q, 1, q, coeffs, kernel, checks, info)


def _dirichlet_design(p, eta, N, theta0):
    L = math.floor(1.0 / eta)
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
    window_value = fejer(2 * L, x_max) - 1.0
    checks.update(
        {
            "q_prime_range": Q * eta / 64.0 <= q_prime <= 2 * Q,
            "phase_small": phase < math.pi * eta / 16.0,
            "window_inside_main_lobe": x_max < math.pi / L,
            "window_amplitude": bool(window_value >= 1.0 / eta),
            "support_fits": 2 * L * q_prime <= N,
        }
    )
    info = {
        "two_l_small": 2 * l < Q * eta / 32.0,
        "Q_eta_large": Q * eta > 64.0,
        "phase": phase,
        "x_max": x_max,
        "window_fejer_min": window_value,
    }
    if not all(checks.values()):
        failed = [k for k, v in checks.items() if not v]
        raise NTooSmall(
            f"Dirichlet-branch design infeasible for N={N}, eta={eta}, "
            f"theta0={theta0}: {', '.join(failed)}",
            checks,
        )
    coeffs = tuple((j * q_prime, Fraction(2 * L - j, L)) for j in range(1, 2 * L))
    kernel = kernel_from_propagators(p, coeffs, N)
    return KernelDesign(p, eta, N, theta0, "dirichlet", L, Q, q, l, q_prime, coeffs, kernel, checks, info)


def design_kernel(p: int, eta: float, N: int, theta0: float) -> KernelDesign:
    """Build a radial kernel supported in the ball of radius ``N``.

    Its transform is at least ``-1`` everywhere and at least ``1/eta`` on
    ``|theta - theta0| <= 1/(2N)`` and on the untempered spectrum.  Angles
    within ``1/(2N)`` of 0 or pi use a plain Fejér window; other angles go
    through a Dirichlet approximation of ``theta0`` to place a Fejér peak of
    order ``2L`` over it.

    Raises:
        EtaOutOfRange: unless ``0 < eta < 1/2``.
        NTooSmall: if a side condition fails; ``exc.checks`` lists them.
    """
    _check_eta(eta)
    if N < 1:
        raise NTooSmall("N must be positive", {"N_positive": False})
    if not 0.0 <= theta0 <= math.pi:
        raise ValueError("theta0 must lie in [0, pi]")
    dist = min(theta0, math.pi - theta0)
    if dist <= 1.0 / (2 * N):
        return _simple_design(p, eta, N, theta0, dist)
    return _dirichlet_design(p, eta, N, theta0)


def untempered_betas(p: int, count: int = 512) -> np.ndarray:
    """Uniform interior grid of ``(0, log sqrt(p))``, both endpoints excluded."""
    return np.linspace(0.0, 0.5 * math.log(p), count + 2)[1:-1]


def _delta_hat(design: KernelDesign) -> tuple[float, float, float]:
    """Return ``(delta_hat, delta_raw, C_norm)``.

    ``C_norm = max(1, p-1)/2 * sum_j w_j`` is the constant of the
    propagation bound summed over the Fejér weights, so that
    ``sup|k| <= C_norm * p^(-N delta_hat)``.
    """
    p, N = design.p, design.N
    sup = design.sup_norm
    c_norm = max(1, p - 1) / 2.0 * design.weight_sum
    logp = math.log(p)
    return (
        -math.log(sup / c_norm) / (logp * N),
        -math.log(sup) / (logp * N),
        c_norm,
    )


@dataclass(frozen=True)
class PropertyReport:
    """Outcome of the four kernel properties for one design."""

    support_ok: bool
    support_radius: int
    delta_measured: float
    delta_raw: float
    delta_required: float
    delta_ok: bool
    min_h_full_spectrum: float
    lower_bound_ok: bool
    min_h_window: float
    window_ok: bool
    window: tuple[float, float]
    closed_form_deviation: float
    closed_form_ok: bool
    analytic_lower_bound: bool
    grids: dict

    @property
    def passed(self) -> bool:
        return (
            self.support_ok
            and self.delta_ok
            and self.lower_bound_ok
            and self.window_ok
            and self.closed_form_ok
        )

    def to_json(self) -> dict:
        return {
            "support_ok": self.support_ok,
            "support_radius": self.support_radius,
            "delta_measured": self.delta_measured,
            "delta_raw": self.delta_raw,
            "delta_required": self.delta_required,
            "delta_ok": self.delta_ok,
            "min_h_full_spectrum": self.min_h_full_spectrum,
            "lower_bound_ok": self.lower_bound_ok,
            "min_h_window": self.min_h_window,
            "window_ok": self.window_ok,
            "window": list(self.window),
            "closed_form_deviation": self.closed_form_deviation,
            "closed_form_ok": self.closed_form_ok,
            "analytic_lower_bound": self.analytic_lower_bound,
            "passed": self.passed,
            "grids": dict(self.grids),
        }


def verify_design(
    design: KernelDesign,
    grid_size: int = 2048,
    untempered_size: int = 512,
    window_size: int = 257,
    closed_form_tol: float = 1e-8,
) -> PropertyReport:
    """Check support, decay, global lower bound and window amplitude.

    Every value of ``h`` is computed from the radial kernel through the
    spherical eigenfunction and compared with the analytic Fejér form;
    the deviation is relative for the exponentially large untempered values.
    """
    p, eta = design.p, design.eta
    thetas = np.linspace(0.0, math.pi, grid_size)
    betas = untempered_betas(p, untempered_size)
    lam_unt = np.concatenate([2 * np.cosh(betas), -2 * np.cosh(betas)])
    lo, hi = design.window
    win = np.linspace(lo, hi, window_size)

    lam_full = np.concatenate([2 * np.cos(thetas), lam_unt])
    lam_win = 2 * np.cos(win)
    h_full = design.h(lam_full)
    h_win = design.h(lam_win)
    closed_full = design.h_closed(lam_full)
    closed_win = design.h_closed(lam_win)
    fejer_temp = design.fejer_form(np.concatenate([thetas, win]))

    def rel_dev(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))

    deviation = max(
        rel_dev(h_full, closed_full),
        rel_dev(h_win, closed_win),
        rel_dev(np.concatenate([h_full[:grid_size], h_win]), fejer_temp),
    )
    h_unt = h_full[grid_size:]
    min_full = float(np.min(h_full))
    min_window = float(min(np.min(h_win), np.min(h_unt)))

    delta_hat, delta_raw, c_norm = _delta_hat(design)
    delta_req = eta * eta / 512.0
    support = design.kernel.support_radius()
    tol = closed_form_tol
    return PropertyReport(
        support_ok=support <= design.N,
        support_radius=support,
        delta_measured=delta_hat,
        delta_raw=delta_raw,
        delta_required=delta_req,
        delta_ok=delta_hat >= delta_req,
        min_h_full_spectrum=min_full,
        lower_bound_ok=min_full >= -1.0 - tol,
        min_h_window=min_window,
        window_ok=min_window >= 1.0 / eta - tol,
        window=(lo, hi),
        closed_form_deviation=deviation,
        closed_form_ok=deviation <= tol,
        analytic_lower_bound=True,
        grids={
            "tempered": grid_size,
            "untempered_per_sign": untempered_size,
            "window": window_size,
            "C_norm": c_norm,
        },
    )


def fit_decay_constant(designs: Sequence[KernelDesign], delta: float | None = None) -> float:
    """Smallest ``C`` with ``sup|k_N| <= C p^(-N delta)`` over a sweep.

    ``delta`` defaults to ``eta^2/512`` of the first design.
    """
    if not designs:
        raise ValueError("need at least one design")
    if delta is None:
        delta = designs[0].eta ** 2 / 512.0
    return max(d.sup_norm * d.p ** (d.N * delta) for d in designs)


@dataclass(frozen=True)
class RecurrenceKernel:
    """``K = sum_{l=1}^{L} P_{2ql}(T_p/2) delta_0`` and its amplification ``a``."""

    p: int
    L: int
    lam: float
    theta: float
    q: int
    a: float

    @property
    def times(self) -> tuple[int, ...]:
        return tuple(2 * self.q * l for l in range(1, self.L + 1))

    @property
    def support(self) -> int:
        return 2 * self.q * self.L

    @property
    def c(self) -> float:
        return self.a / self.L

    @cached_property
    def kernel(self) -> RadialFunction:
        coeffs = [(t, Fraction(1)) for t in self.times]
        return kernel_from_propagators(self.p, coeffs, self.support)

    def __iter__(self):
        return iter((self.q, self.kernel, self.a))


def recurrence_kernel(p: int, L: int, lam: float) -> RecurrenceKernel:
    """Amplifier peaked at ``lam`` from a Dirichlet-chosen propagation step.

    ``theta = arccos(lam/2)`` on ``[-2, 2]``, 0 above and pi below; ``q`` is
    the smallest of ``1..100L`` with ``|q theta mod 2pi| <= pi/(50L)``.  The
    kernel itself is built lazily since its radius grows like ``L^2``.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    lam = float(lam)
    if abs(lam) > _spectral_radius(p) * (1 + 1e-14):
        raise OutOfSpectrum(f"|lambda|={abs(lam)} exceeds (p+1)/sqrt(p)")
    if lam > 2.0:
        theta = 0.0
    elif lam < -2.0:
        theta = math.pi
    else:
        theta = math.acos(lam / 2.0)
    bound = math.pi / (50 * L)
    q = next(
        (
            q
            for q in range(1, 100 * L + 1)
            if abs(math.remainder(q * theta, 2.0 * math.pi)) <= bound
        ),
        None,
    )
    if q is None:
        raise AssertionError(f"recurrence search exhausted for lambda={lam}")
    a = float(sum(cheb_eval("first", 2 * q * l, lam / 2.0) for l in range(1, L + 1)))
    return RecurrenceKernel(p, L, lam, theta, q, a)
