"""Exact radial functions on a truncated (p+1)-regular tree.

Values live in the quadratic field Q(sqrt(p)); the normalized Hecke operator
``T_p = p**-0.5 * (sum over neighbours)`` maps Q(sqrt(p)) to itself, so every
computation on this side of the package is exact.

A radial function is stored as two tuples of rationals (the rational and
sqrt(p) parts) rather than a tuple of number objects: ``tp_apply`` is the hot
loop of the wave stepper and the kernel oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterable, Sequence

from gmpy2 import mpq

from .errors import MismatchedTree, TruncationOverflow

__all__ = [
    "AlgebraicNumber",
    "RadialFunction",
    "SphereSizes",
    "delta_at_root",
    "radial_inner",
    "sphere_sizes",
    "tp_apply",
]

_ZERO = mpq(0)
_ONE = mpq(1)


@lru_cache(maxsize=None)
def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for d in range(2, math.isqrt(n) + 1):
        if n % d == 0:
            return False
    return True


def _check_prime(p) -> int:
    if isinstance(p, bool) or not isinstance(p, int) or not _is_prime(p):
        raise ValueError(f"p must be a prime integer, got {p!r}")
    return p


def _rat(x) -> mpq:
    """Coerce an exact rational-like value to mpq; floats are rejected."""
    if isinstance(x, float):
        raise TypeError("floats are not exact; pass a Fraction or int")
    if isinstance(x, (int, Rational)) or type(x) is type(_ZERO):
        return mpq(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


class AlgebraicNumber:
    """An element ``u + v*sqrt(p)`` of Q(sqrt(p)) with exact rational parts."""

    __slots__ = ("u", "v", "p")

    def __init__(self, u=0, v=0, p: int = 2):
        self.u = _rat(u)
        self.v = _rat(v)
        self.p = _check_prime(p)

    @classmethod
    def _raw(cls, u: mpq, v: mpq, p: int) -> "AlgebraicNumber":
        obj = object.__new__(cls)
        obj.u = u
        obj.v = v
        obj.p = p
        return obj

    @classmethod
    def sqrt_p(cls, p: int) -> "AlgebraicNumber":
        return cls(0, 1, p)

    def _coerce(self, other) -> "AlgebraicNumber":
        if isinstance(other, AlgebraicNumber):
            if other.p != self.p:
                raise MismatchedTree(f"Q(sqrt({self.p})) vs Q(sqrt({other.p}))")
            return other
        return AlgebraicNumber._raw(_rat(other), _ZERO, self.p)

    def __add__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return AlgebraicNumber._raw(self.u + o.u, self.v + o.v, self.p)

    __radd__ = __add__

    def __neg__(self):
        return AlgebraicNumber._raw(-self.u, -self.v, self.p)

    def __sub__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return AlgebraicNumber._raw(self.u - o.u, self.v - o.v, self.p)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        p = self.p
        return AlgebraicNumber._raw(
            self.u * o.u + p * self.v * o.v, self.u * o.v + self.v * o.u, p
        )

    __rmul__ = __mul__

    def conjugate(self) -> "AlgebraicNumber":
        return AlgebraicNumber._raw(self.u, -self.v, self.p)

    def norm(self) -> mpq:
        """Field norm ``u**2 - p*v**2``; nonzero for nonzero elements."""
        return self.u * self.u - self.p * self.v * self.v

    def __truediv__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt(p))")
        num = self * o.conjugate()
        return AlgebraicNumber._raw(num.u / n, num.v / n, self.p)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return AlgebraicNumber._raw(_ONE, _ZERO, self.p) / (self ** -k)
        result = AlgebraicNumber._raw(_ONE, _ZERO, self.p)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def sign(self) -> int:
        """Exact sign of ``u + v*sqrt(p)``."""
        su = (self.u > 0) - (self.u < 0)
        sv = (self.v > 0) - (self.v < 0)
        if su == sv or sv == 0:
            return su
        if su == 0:
            return sv
        # opposite signs: compare u**2 with p*v**2
        d = self.u * self.u - self.p * self.v * self.v
        return su if d > 0 else (sv if d < 0 else 0)

    def is_zero(self) -> bool:
        return self.u == 0 and self.v == 0

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        if isinstance(other, AlgebraicNumber):
            return self.p == other.p and self.u == other.u and self.v == other.v
        try:
            return self.v == 0 and self.u == _rat(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.p, self.u, self.v))

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __gt__(self, other):
        return (self - other).sign() > 0

    def __ge__(self, other):
        return (self - other).sign() >= 0

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __float__(self):
        return float(self.u) + float(self.v) * math.sqrt(self.p)

    def __repr__(self):
        return f"AlgebraicNumber({Fraction(self.u)!s}, {Fraction(self.v)!s}, p={self.p})"

    def __str__(self):
        if self.v == 0:
            return str(Fraction(self.u))
        return f"{Fraction(self.u)}{'+' if self.v >= 0 else '-'}{Fraction(abs(self.v))}*sqrt({self.p})"

    def to_list(self) -> list[int]:
        """``[u_num, u_den, v_num, v_den]`` for JSON serialization."""
        return [
            int(self.u.numerator), int(self.u.denominator),
            int(self.v.numerator), int(self.v.denominator),
        ]

    @classmethod
    def from_list(cls, entry: Sequence[int], p: int) -> "AlgebraicNumber":
        un, ud, vn, vd = entry
        return cls(Fraction(un, ud), Fraction(vn, vd), p)


@dataclass(frozen=True)
class SphereSizes:
    """Vertex counts of the spheres around the root: 1, p+1, (p+1)p, ..."""

    p: int
    sizes: tuple[int, ...]

    def __getitem__(self, j):
        return self.sizes[j]

    def __len__(self):
        return len(self.sizes)


@lru_cache(maxsize=64)
def sphere_sizes(p: int, R: int) -> SphereSizes:
    _check_prime(p)
    sizes = [1] + [(p + 1) * p ** (j - 1) for j in range(1, R + 1)]
    return SphereSizes(p, tuple(sizes))


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Radial function on the ball of radius R of the (p+1)-regular tree.

    ``u[d] + v[d]*sqrt(p)`` is the value on every vertex at distance ``d``
    from the root; values beyond ``R`` are zero.
    """

    p: int
    u: tuple
    v: tuple

    def __post_init__(self):
        _check_prime(self.p)
        if len(self.u) != len(self.v) or not self.u:
            raise ValueError("u and v must be nonempty and of equal length")

    @property
    def R(self) -> int:
        return len(self.u) - 1

    @classmethod
    def zeros(cls, p: int, R: int) -> "RadialFunction":
        if R < 0:
            raise ValueError("R must be non-negative")
        z = (_ZERO,) * (R + 1)
        return cls(p, z, z)

    @classmethod
    def from_values(cls, p: int, values: Iterable) -> "RadialFunction":
        us, vs = [], []
        for x in values:
            if isinstance(x, AlgebraicNumber):
                if x.p != p:
                    raise MismatchedTree(f"value in Q(sqrt({x.p})) for p={p}")
                us.append(x.u)
                vs.append(x.v)
            else:
                us.append(_rat(x))
                vs.append(_ZERO)
        return cls(p, tuple(us), tuple(vs))

    @property
    def values(self) -> tuple[AlgebraicNumber, ...]:
        p = self.p
        return tuple(AlgebraicNumber._raw(a, b, p) for a, b in zip(self.u, self.v))

    def __getitem__(self, d: int) -> AlgebraicNumber:
        return AlgebraicNumber._raw(self.u[d], self.v[d], self.p)

    def __len__(self):
        return len(self.u)

    def _check_same(self, other: "RadialFunction"):
        if not isinstance(other, RadialFunction):
            raise TypeError(f"expected RadialFunction, got {type(other).__name__}")
        if other.p != self.p or other.R != self.R:
            raise MismatchedTree(
                f"(p={self.p}, R={self.R}) vs (p={other.p}, R={other.R})"
            )

    def __add__(self, other):
        self._check_same(other)
        return RadialFunction(
            self.p,
            tuple(a + b for a, b in zip(self.u, other.u)),
            tuple(a + b for a, b in zip(self.v, other.v)),
        )

    def __sub__(self, other):
        self._check_same(other)
        return RadialFunction(
            self.p,
            tuple(a - b for a, b in zip(self.u, other.u)),
            tuple(a - b for a, b in zip(self.v, other.v)),
        )

    def __neg__(self):
        return RadialFunction(self.p, tuple(-a for a in self.u), tuple(-b for b in self.v))

    def scale(self, c) -> "RadialFunction":
        """Multiply by an exact scalar from Q(sqrt(p))."""
        if isinstance(c, AlgebraicNumber):
            if c.p != self.p:
                raise MismatchedTree(f"scalar in Q(sqrt({c.p})) for p={self.p}")
            a, b = c.u, c.v
        else:
            a, b = _rat(c), _ZERO
        if b == 0:
            return RadialFunction(self.p, tuple(a * x for x in self.u), tuple(a * y for y in self.v))
        p = self.p
        return RadialFunction(
            p,
            tuple(a * x + p * b * y for x, y in zip(self.u, self.v)),
            tuple(b * x + a * y for x, y in zip(self.u, self.v)),
        )

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, RadialFunction):
            return NotImplemented
        return self.p == other.p and self.u == other.u and self.v == other.v

    def __hash__(self):
        return hash((self.p, self.u, self.v))

    def is_zero(self) -> bool:
        return not any(self.u) and not any(self.v)

    def support_radius(self) -> int:
        """Largest distance carrying a nonzero value, or -1 for the zero function."""
        for d in range(self.R, -1, -1):
            if self.u[d] or self.v[d]:
                return d
        return -1

    def extend(self, R: int) -> "RadialFunction":
        """Same function viewed on a larger ball."""
        if R < self.R:
            if self.support_radius() > R:
                raise TruncationOverflow(f"support exceeds new radius {R}")
            return RadialFunction(self.p, self.u[: R + 1], self.v[: R + 1])
        pad = (_ZERO,) * (R - self.R)
        return RadialFunction(self.p, self.u + pad, self.v + pad)

    def to_floats(self) -> list[float]:
        s = math.sqrt(self.p)
        return [float(a) + float(b) * s for a, b in zip(self.u, self.v)]

    def to_json(self) -> dict:
        return {"p": self.p, "R": self.R, "values": [x.to_list() for x in self.values]}

    @classmethod
    def from_json(cls, data: dict) -> "RadialFunction":
        p = int(data["p"])
        vals = [AlgebraicNumber.from_list(e, p) for e in data["values"]]
        if len(vals) != int(data["R"]) + 1:
            raise ValueError("length of values must be R+1")
        return cls.from_values(p, vals)


def delta_at_root(p: int, R: int) -> RadialFunction:
    """Indicator of the root vertex."""
    if R < 0:
        raise ValueError("R must be non-negative")
    z = RadialFunction.zeros(p, R)
    return RadialFunction(p, (_ONE,) + z.u[1:], z.v)


def _shift_sum(x: tuple, p: int) -> list:
    """Unnormalized neighbour sum of a radial function (no 1/sqrt(p))."""
    R = len(x) - 1
    if R == 0:
        return [_ZERO]
    out = [None] * (R + 1)
    out[0] = (p + 1) * x[1]
    for d in range(1, R):
        out[d] = x[d - 1] + p * x[d + 1]
    out[R] = x[R - 1]
    return out


def tp_apply(f: RadialFunction) -> RadialFunction:
    """Apply the normalized Hecke operator ``T_p`` exactly.

    Raises:
        TruncationOverflow: if ``f`` is nonzero at the boundary radius, since
            the result would then leak past ``R``.
    """
    R, p = f.R, f.p
    if f.u[R] or f.v[R]:
        raise TruncationOverflow(
            f"tp_apply needs f[R] = 0 (R={R}); enlarge the ball"
        )
    # (a + b sqrt p) / sqrt p = b + (a/p) sqrt p
    su = _shift_sum(f.u, p)
    sv = _shift_sum(f.v, p)
    return RadialFunction(p, tuple(sv), tuple(a / p for a in su))


def radial_inner(f: RadialFunction, g: RadialFunction) -> AlgebraicNumber:
    """Counting-measure inner product ``sum_d |S_d| f[d] g[d]``."""
    f._check_same(g)
    p = f.p
    sizes = sphere_sizes(p, f.R).sizes
    su = _ZERO
    sv = _ZERO
    for n, a, b, c, d in zip(sizes, f.u, f.v, g.u, g.v):
        if (a or b) and (c or d):
            su += n * (a * c + p * b * d)
            sv += n * (a * d + b * c)
    return AlgebraicNumber._raw(su, sv, p)
