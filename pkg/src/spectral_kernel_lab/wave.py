"""The p-adic wave equation on radial functions and its Chebyshev solution.

The stepper

    Phi_{n+1} = 1/2 T Phi_n - (1 - T^2/4) Psi_n
    Psi_{n+1} = 1/2 T Psi_n + Phi_n

is solved by ``Phi_n = P_n(T/2) Phi_0 - (1 - T^2/4) Q_{n-1}(T/2) Psi_0`` and
``Psi_n = P_n(T/2) Psi_0 + Q_{n-1}(T/2) Phi_0`` where ``P_n`` and ``Q_n`` are
the Chebyshev polynomials of the first and second kind.  Everything here is
exact; the operator polynomials are applied through the three-term
recurrence, never through monomial coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterator

import numpy as np

from .errors import MismatchedTree, OddPropagationTime, TruncationOverflow
from .tree_core import (
    AlgebraicNumber,
    RadialFunction,
    delta_at_root,
    radial_inner,
    tp_apply,
)

__all__ = [
    "ChebyshevPair",
    "PropagationReport",
    "WaveCheckReport",
    "WaveState",
    "cheb_eval",
    "chebyshev_operator",
    "chebyshev_operator_sequence",
    "energy",
    "propagate_closed_form",
    "energy_trials",
    "propagation_report",
    "random_wave_state",
    "wave_closed_form_check",
    "wave_step",
]


@dataclass(frozen=True)
class WaveState:
    """The pair ``(Phi_n, Psi_n)`` at time ``step``."""

    phi: RadialFunction
    psi: RadialFunction
    step: int = 0

    def __post_init__(self):
        if self.phi.p != self.psi.p or self.phi.R != self.psi.R:
            raise MismatchedTree("phi and psi must share p and R")
        if self.step < 0:
            raise ValueError("step must be non-negative")

    @property
    def p(self) -> int:
        return self.phi.p

    @property
    def R(self) -> int:
        return self.phi.R


def _one_minus_quarter_t2(f: RadialFunction) -> RadialFunction:
    """Apply ``1 - T_p^2/4``."""
    return f - tp_apply(tp_apply(f)).scale(Fraction(1, 4))


def wave_step(s: WaveState) -> WaveState:
    """Advance the wave equation by one step, exactly.

    Raises:
        TruncationOverflow: if the ball is too small for two applications of
            ``T_p`` to ``Psi`` (or one to ``Phi``).
    """
    half = Fraction(1, 2)
    phi_next = tp_apply(s.phi).scale(half) - _one_minus_quarter_t2(s.psi)
    psi_next = tp_apply(s.psi).scale(half) + s.phi
    return WaveState(phi_next, psi_next, s.step + 1)


def energy(s: WaveState) -> AlgebraicNumber:
    """Conserved energy ``<Phi, Phi> + <Psi, (1 - T^2/4) Psi>``."""
    return radial_inner(s.phi, s.phi) + radial_inner(s.psi, _one_minus_quarter_t2(s.psi))


def _is_exact(x) -> bool:
    return isinstance(x, (AlgebraicNumber, Rational)) or type(x).__name__ == "mpq"


def _joint_recursion(n: int, x):
    """Return ``(P_n(x), Q_{n-1}(x))`` by the coupled recursion."""
    P, Qm1 = x * 0 + 1, x * 0
    for _ in range(n):
        # P_{k+1} = x P_k - (1 - x^2) Q_{k-1};  Q_k = x Q_{k-1} + P_k
        P, Qm1 = x * P - (1 - x * x) * Qm1, x * Qm1 + P
    return P, Qm1


# Beyond this degree the float path switches from the O(n) recursion to the
# trigonometric closed form, which is as accurate and O(1).
_RECURSION_MAX = 256


def _trig_form(kind: str, n: int, x: np.ndarray) -> np.ndarray:
    t = np.arccos(x)
    if kind == "first":
        return np.cos(n * t)
    s = np.sin(t)
    edge = np.where(x > 0, float(n + 1), (-1.0) ** n * (n + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sin((n + 1) * t) / s
    return np.where(np.abs(s) < 1e-300, edge, val)


def cheb_eval(kind: str, n: int, x):
    """Evaluate ``P_n(x)`` (``kind='first'``) or ``Q_n(x)`` (``kind='second'``).

    ``P_n(cos t) = cos(n t)`` and ``Q_n(cos t) = sin((n+1) t) / sin t``.
    Exact inputs (ints, Fractions, ``AlgebraicNumber``) give exact outputs.
    Float inputs use the joint recursion for ``|x| <= 1`` (the trigonometric
    form for degrees above 256) and the cosh/sinh closed forms outside,
    where the recursion loses accuracy.
    Arrays are accepted on the float path.
    """
    if kind not in ("first", "second"):
        raise ValueError("kind must be 'first' or 'second'")
    if n < 0:
        raise ValueError("n must be non-negative")
    m = n if kind == "first" else n + 1
    if _is_exact(x):
        P, Qm1 = _joint_recursion(m, x)
        return P if kind == "first" else Qm1

    xa = np.asarray(x, dtype=float)
    inside = np.abs(xa) <= 1.0
    xi = np.where(inside, xa, 0.0)
    if m <= _RECURSION_MAX:
        P, Qm1 = _joint_recursion(m, xi)
        out = P if kind == "first" else Qm1
    else:
        out = _trig_form(kind, n, xi)
    if not inside.all():
        xo = np.where(inside, 2.0, np.abs(xa))
        beta = np.arccosh(xo)
        sgn = np.where(xa < 0, (-1.0) ** (m - (kind == "second")), 1.0)
        with np.errstate(over="ignore"):
            if kind == "first":
                closed = np.cosh(n * beta)
            else:
                closed = np.sinh((n + 1) * beta) / np.sinh(beta)
        out = np.where(inside, out, sgn * closed)
    return out.item() if out.ndim == 0 else out


class ChebyshevPair:
    """Exact coefficient lists of ``P_n`` and ``Q_{n-1}`` (lowest degree first).

    Args:
        n: the degree of ``P_n``.
    """

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n
        P = [Fraction(1)]
        Q = [Fraction(0)]
        for _ in range(n):
            xP = [Fraction(0)] + P
            # (1 - x^2) Q
            w = Q + [Fraction(0), Fraction(0)]
            for i, c in enumerate(Q):
                w[i + 2] -= c
            newP = _poly_sub(xP, w)
            Q = _poly_add([Fraction(0)] + Q, P)
            P = newP
        self.p_coeffs = tuple(_trim(P))
        self.q_coeffs = tuple(_trim(Q))

    @staticmethod
    def _horner(coeffs, x):
        acc = x * 0
        for c in reversed(coeffs):
            acc = acc * x + c
        return acc

    def P(self, x):
        return self._horner(self.p_coeffs, x)

    def Q(self, x):
        """Evaluates ``Q_{n-1}``."""
        return self._horner(self.q_coeffs, x)

    @property
    def degree_p(self) -> int:
        return len(self.p_coeffs) - 1

    @property
    def degree_q(self) -> int:
        """Degree of ``Q_{n-1}``; ``-1`` for the zero polynomial (n = 0)."""
        if len(self.q_coeffs) == 1 and self.q_coeffs[0] == 0:
            return -1
        return len(self.q_coeffs) - 1


def _poly_add(a, b):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return out


def _poly_sub(a, b):
    return _poly_add(a, [-c for c in b])


def _trim(c):
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c


def chebyshev_operator_sequence(kind: str, f: RadialFunction) -> Iterator[RadialFunction]:
    """Yield ``X_0(T/2) f, X_1(T/2) f, ...`` for ``X = P`` or ``Q``.

    Uses the three-term recurrence ``X_{k+1}(T/2) = T X_k(T/2) - X_{k-1}(T/2)``
    with ``P_1(T/2) = T/2`` and ``Q_1(T/2) = T``.  The generator stops with
    ``TruncationOverflow`` once the ball is too small.
    """
    if kind not in ("first", "second"):
        raise ValueError("kind must be 'first' or 'second'")
    prev = f
    yield prev
    tf = tp_apply(f)
    cur = tf.scale(Fraction(1, 2)) if kind == "first" else tf
    while True:
        yield cur
        prev, cur = cur, tp_apply(cur) - prev


def chebyshev_operator(kind: str, n: int, f: RadialFunction) -> RadialFunction:
    """Return ``P_n(T/2) f`` or ``Q_n(T/2) f`` exactly; ``n = -1`` gives zero for Q."""
    if kind == "second" and n == -1:
        return RadialFunction.zeros(f.p, f.R)
    if n < 0:
        raise ValueError("n must be non-negative")
    for k, g in enumerate(chebyshev_operator_sequence(kind, f)):
        if k == n:
            return g
    raise AssertionError("unreachable")


def propagate_closed_form(p: int, n: int, R: int) -> RadialFunction:
    """Closed form of ``P_n(T_p/2) delta_0`` for even ``n``.

    The value at distance ``d`` is zero for odd ``d`` or ``d > n``,
    ``(1-p) / (2 p^(n/2))`` for even ``d < n`` and ``1 / (2 p^(n/2))`` at
    ``d = n``; ``n = 0`` gives the delta function itself.

    Raises:
        OddPropagationTime: for odd ``n``.
        TruncationOverflow: if ``R < n``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n % 2:
        raise OddPropagationTime(f"closed form holds for even n only, got n={n}")
    if R < n:
        raise TruncationOverflow(f"support radius {n} exceeds R={R}")
    if n == 0:
        return delta_at_root(p, R)
    scale = Fraction(1, 2 * p ** (n // 2))
    vals = [Fraction(0)] * (R + 1)
    for d in range(0, n, 2):
        vals[d] = (1 - p) * scale
    vals[n] = scale
    return RadialFunction.from_values(p, vals)


def _max_abs(f: RadialFunction) -> float:
    return max((float(abs(x)) for x in f.values), default=0.0)


@dataclass(frozen=True)
class PropagationReport:
    """Comparison of the closed form with the operator computation."""

    p: int
    n: int
    max_abs_deviation: float
    exact_zero: bool
    sup_norm: float
    sup_constant: float

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "max_abs_deviation": self.max_abs_deviation,
            "exact_zero": self.exact_zero,
            "sup_norm": self.sup_norm,
            "sup_constant": self.sup_constant,
        }


def propagation_report(p: int, n: int, R: int | None = None) -> PropagationReport:
    """Check the closed form against the Chebyshev operator route.

    ``sup_constant`` is ``sup_d |value| * p^(n/2)``, the measured constant in
    the ``p^(-n/2)`` decay of the propagated delta.
    """
    R = n + 1 if R is None else R
    closed = propagate_closed_form(p, n, R)
    oracle = chebyshev_operator("first", n, delta_at_root(p, R))
    diff = closed - oracle
    sup = _max_abs(oracle)
    return PropagationReport(
        p=p,
        n=n,
        max_abs_deviation=_max_abs(diff),
        exact_zero=diff.is_zero(),
        sup_norm=sup,
        sup_constant=sup * p ** (n / 2),
    )


@dataclass(frozen=True)
class WaveCheckReport:
    """Exact comparison of the stepped solution with the Chebyshev form."""

    p: int
    n: int
    phi_equal: bool
    psi_equal: bool
    max_abs_deviation: float
    energy_drift_zero: bool

    @property
    def equal(self) -> bool:
        return self.phi_equal and self.psi_equal

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "phi_equal": self.phi_equal,
            "psi_equal": self.psi_equal,
            "max_abs_deviation": self.max_abs_deviation,
            "energy_drift_zero": self.energy_drift_zero,
        }


def wave_closed_form_check(
    p: int, n: int, phi0: RadialFunction, psi0: RadialFunction
) -> WaveCheckReport:
    """Step ``n`` times and compare with the Chebyshev closed-form solution."""
    if phi0.p != p or psi0.p != p:
        raise MismatchedTree("initial data must live on the tree of degree p+1")
    s0 = WaveState(phi0, psi0, 0)
    s = s0
    for _ in range(n):
        s = wave_step(s)
    Pn_phi = chebyshev_operator("first", n, phi0)
    Pn_psi = chebyshev_operator("first", n, psi0)
    Q_phi = chebyshev_operator("second", n - 1, phi0)
    Q_psi = chebyshev_operator("second", n - 1, psi0)
    phi_closed = Pn_phi - _one_minus_quarter_t2(Q_psi)
    psi_closed = Pn_psi + Q_phi
    d_phi = s.phi - phi_closed
    d_psi = s.psi - psi_closed
    e0 = energy(s0)
    try:
        drift_zero = (energy(s) - e0).is_zero()
    except TruncationOverflow:
        drift_zero = False
    return WaveCheckReport(
        p=p,
        n=n,
        phi_equal=d_phi.is_zero(),
        psi_equal=d_psi.is_zero(),
        max_abs_deviation=max(_max_abs(d_phi), _max_abs(d_psi)),
        energy_drift_zero=drift_zero,
    )


def random_wave_state(
    rng: np.random.Generator, p: int, R: int, support: int = 3, max_den: int = 9
) -> WaveState:
    """Random exact initial data supported in the ball of radius ``support``.

    Each entry is ``a/b + (c/d) sqrt(p)`` with numerators in ``[-9, 9]`` and
    denominators in ``[1, max_den]``.
    """
    if support > R:
        raise TruncationOverflow(f"support {support} exceeds R={R}")

    def draw():
        num = rng.integers(-9, 10, size=(support + 1, 2))
        den = rng.integers(1, max_den + 1, size=(support + 1, 2))
        vals = [
            AlgebraicNumber(Fraction(int(a), int(b)), Fraction(int(c), int(d)), p)
            for (a, c), (b, d) in zip(num, den)
        ]
        return RadialFunction.from_values(p, vals).extend(R)

    return WaveState(draw(), draw(), 0)


def energy_trials(
    seed: int,
    trials: int = 100,
    steps: int = 50,
    primes: tuple[int, ...] = (2, 3, 5, 7),
    support: int = 3,
) -> dict:
    """Step random exact states and record whether the energy ever moves.

    The ball radius is ``support + steps + 2`` so that neither the stepper
    nor the energy form ever reaches the boundary.
    """
    rng = np.random.default_rng(seed)
    R = support + steps + 2
    drifts = []
    for i in range(trials):
        p = int(primes[i % len(primes)])
        s = random_wave_state(rng, p, R, support)
        e0 = energy(s)
        moved = False
        for _ in range(steps):
            s = wave_step(s)
            if not (energy(s) - e0).is_zero():
                moved = True
        drifts.append({"trial": i, "p": p, "drift_zero": not moved, "energy": str(e0)})
    return {
        "seed": seed,
        "trials": trials,
        "steps": steps,
        "all_zero": all(d["drift_zero"] for d in drifts),
        "results": drifts,
    }
