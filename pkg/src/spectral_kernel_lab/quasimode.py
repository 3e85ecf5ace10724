"""Spectral model of quasimodes and their projection onto spectral windows.

A quasimode is represented only through its expansion in eigenfunctions:
a list of ``(parameter, coefficient)`` pairs of unit l2-norm.  For the
Laplacian the parameter is ``r_i`` (eigenvalue ``-(1/4 + r_i^2)``); for the
Hecke operator it is the eigenvalue ``lambda_i`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import ConventionMismatch, DegenerateWindow, OutOfSpectrum
from .tree_kernel import SpectralPoint

__all__ = [
    "LAPLACE",
    "HECKE",
    "Projection",
    "ProjectionReport",
    "SpectralDecomposition",
    "Window",
    "adversarial_decomposition",
    "hecke_defect",
    "hecke_theta",
    "laplace_defect",
    "multiplier_deviation",
    "project_window",
    "random_decomposition",
    "run_projection_trials",
    "verify_projection_bound",
]

LAPLACE = "laplace"
HECKE = "hecke"

# relative slack for comparing two float expressions of a proved inequality
_ROUNDING = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Unit-norm list of ``(parameter, coefficient)`` pairs.

    Components sharing a parameter are merged with coefficient
    ``sqrt(c1^2 + c2^2)`` so the parameters stay distinct.
    """

    components: tuple
    convention: str
    p: int | None = None

    def __post_init__(self):
        if self.convention not in (LAPLACE, HECKE):
            raise ValueError(f"convention must be '{LAPLACE}' or '{HECKE}'")
        merged: dict[float, float] = {}
        for param, coeff in self.components:
            param, coeff = float(param), float(coeff)
            if self.convention == LAPLACE and param < 0:
                raise ValueError("Laplace spectral parameters must be non-negative")
            if self.convention == HECKE and self.p is not None:
                if abs(param) > (self.p + 1) / math.sqrt(self.p) * (1 + 1e-14):
                    raise OutOfSpectrum(f"eigenvalue {param} outside the T_p spectrum")
            if param in merged:
                merged[param] = math.hypot(merged[param], coeff)
            else:
                merged[param] = coeff
        comps = tuple(sorted(merged.items()))
        object.__setattr__(self, "components", comps)
        mass = math.fsum(c * c for _, c in comps)
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"coefficients must have unit l2 norm, got {mass}")

    @classmethod
    def normalized(cls, components: Iterable, convention: str, p: int | None = None):
        comps = [(float(a), float(c)) for a, c in components]
        norm = math.sqrt(math.fsum(c * c for _, c in comps))
        if norm == 0:
            raise ValueError("cannot normalize the zero decomposition")
        return cls(tuple((a, c / norm) for a, c in comps), convention, p)

    @property
    def parameters(self) -> np.ndarray:
        return np.array([a for a, _ in self.components])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.components])

    def to_json(self) -> dict:
        out = {"convention": self.convention, "components": [list(c) for c in self.components]}
        if self.p is not None:
            out["p"] = self.p
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SpectralDecomposition":
        return cls(
            tuple((a, c) for a, c in data["components"]),
            data["convention"],
            data.get("p"),
        )


@dataclass(frozen=True)
class Window:
    """The closed interval ``[center - half_width, center + half_width]``."""

    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def contains(self, x) -> np.ndarray:
        return np.abs(np.asarray(x, dtype=float) - self.center) <= self.half_width


def _require(psi: SpectralDecomposition, convention: str):
    if psi.convention != convention:
        raise ConventionMismatch(f"expected a {convention} decomposition, got {psi.convention}")


def laplace_defect(psi: SpectralDecomposition, r: float) -> float:
    """``||(Delta + 1/4 + r^2) psi|| = sqrt(sum c_i^2 (r^2 - r_i^2)^2)``."""
    _require(psi, LAPLACE)
    a, c = psi.parameters, psi.coefficients
    return float(math.sqrt(math.fsum((c * (r * r - a * a)) ** 2)))


def hecke_defect(psi: SpectralDecomposition, lam: float) -> float:
    """``||(T_p - lambda) psi|| = sqrt(sum c_i^2 (lambda_i - lambda)^2)``."""
    _require(psi, HECKE)
    a, c = psi.parameters, psi.coefficients
    return float(math.sqrt(math.fsum((c * (a - lam)) ** 2)))


def hecke_theta(lam: float, p: int) -> SpectralPoint:
    """Spectral point with ``2 cos(theta) = lambda``.

    Raises:
        OutOfSpectrum: if ``|lambda| > (p+1)/sqrt(p)``.
    """
    return SpectralPoint.from_eigenvalue(lam, p)


@dataclass(frozen=True)
class Projection:
    """Components inside a window (unnormalized) and the mass outside."""

    inside: tuple
    inside_mass: float
    outside_mass: float

    def __iter__(self):
        return iter((self.inside, self.outside_mass))


def project_window(psi: SpectralDecomposition, w: Window) -> Projection:
    """Split ``psi`` by membership of each parameter in the window."""
    mask = w.contains(psi.parameters)
    inside = tuple(comp for comp, m in zip(psi.components, mask) if m)
    c2 = psi.coefficients ** 2
    return Projection(inside, float(math.fsum(c2[mask])), float(math.fsum(c2[~mask])))


@dataclass(frozen=True)
class ProjectionReport:
    r: float
    omega: float
    defect: float
    outside_mass: float
    bound: float
    holds: bool

    @property
    def tightness(self) -> float:
        """``outside_mass / bound``; at most 1 when the bound holds."""
        return self.outside_mass / self.bound if self.bound > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "omega": self.omega,
            "defect": self.defect,
            "outside_mass": self.outside_mass,
            "bound": self.bound,
            "holds": self.holds,
            "tightness": self.tightness,
        }


def verify_projection_bound(psi: SpectralDecomposition, r: float, omega: float) -> ProjectionReport:
    """Check ``outside_mass <= (defect / (2 omega r - omega^2))^2``.

    Every component outside ``[r - omega, r + omega]`` has
    ``|r^2 - r_i^2| > 2 omega r - omega^2``, so the inequality is a theorem;
    a failure means a bug.

    Raises:
        DegenerateWindow: if ``2 omega r <= omega^2``.
    """
    gap = 2.0 * omega * r - omega * omega
    if not gap > 0:
        raise DegenerateWindow(f"2*omega*r = {2 * omega * r} <= omega^2 = {omega * omega}")
    defect = laplace_defect(psi, r)
    outside = project_window(psi, Window(r, omega)).outside_mass
    bound = (defect / gap) ** 2
    holds = outside <= bound * (1.0 + _ROUNDING)
    return ProjectionReport(float(r), float(omega), defect, outside, bound, bool(holds))


def random_decomposition(
    rng: np.random.Generator,
    n: int,
    convention: str = LAPLACE,
    center: float = 50.0,
    spread: float = 5.0,
    p: int | None = None,
) -> SpectralDecomposition:
    """Random unit decomposition with ``n`` components around ``center``."""
    if convention == LAPLACE:
        params = np.abs(center + spread * rng.standard_normal(n))
    else:
        lim = (p + 1) / math.sqrt(p) if p else 2.0
        params = np.clip(center + spread * rng.standard_normal(n), -lim, lim)
    coeffs = rng.standard_normal(n)
    return SpectralDecomposition.normalized(zip(params, coeffs), convention, p)


def adversarial_decomposition(r: float, omega: float, eps: float = 1e-6, mass: float = 0.5):
    """Mass ``1 - mass`` at ``r`` and ``mass`` just past the lower window edge.

    The lower edge is where ``|r^2 - r_i^2|`` comes closest to
    ``2 omega r - omega^2``, so this configuration nearly saturates the bound.
    """
    comps = [(r, math.sqrt(1.0 - mass)), (r - omega - eps, math.sqrt(mass))]
    return SpectralDecomposition(tuple(comps), LAPLACE)


def run_projection_trials(
    seed: int,
    trials: int = 1000,
    n_components: int = 50,
    r_range: tuple[float, float] = (10.0, 100.0),
    omega_range: tuple[float, float] = (0.01, 1.0),
) -> dict:
    """Randomized check of the projection bound with a recorded seed."""
    rng = np.random.default_rng(seed)
    failures = []
    worst = 0.0
    for i in range(trials):
        r = float(rng.uniform(*r_range))
        omega = float(rng.uniform(*omega_range))
        spread = float(rng.uniform(0.1, 3.0)) * omega
        psi = random_decomposition(rng, n_components, LAPLACE, center=r, spread=spread)
        rep = verify_projection_bound(psi, r, omega)
        worst = max(worst, rep.tightness)
        if not rep.holds:
            failures.append({"trial": i, **rep.to_json()})
    return {
        "seed": seed,
        "trials": trials,
        "n_components": n_components,
        "failures": failures,
        "all_hold": not failures,
        "max_tightness": worst,
    }


def multiplier_deviation(
    psi: SpectralDecomposition,
    lam: float,
    h: Callable[[np.ndarray], np.ndarray],
    p: int,
    grid_size: int = 4001,
) -> dict:
    """``||K psi - h(lambda) psi||`` for a radial operator with multiplier ``h``.

    Compared against ``Lip(h) * hecke_defect``, with ``Lip(h)`` measured by
    finite differences on a grid of the whole ``T_p`` spectrum.
    """
    _require(psi, HECKE)
    a, c = psi.parameters, psi.coefficients
    dev = float(math.sqrt(math.fsum((c * (np.asarray(h(a)) - float(np.asarray(h(np.array([lam])))[0]))) ** 2)))
    lim = (p + 1) / math.sqrt(p)
    grid = np.linspace(-lim, lim, grid_size)
    hv = np.asarray(h(grid), dtype=float)
    lip = float(np.max(np.abs(np.diff(hv)) / np.diff(grid)))
    defect = hecke_defect(psi, lam)
    return {"deviation": dev, "defect": defect, "lipschitz": lip, "bound": lip * defect}
