"""Potential families and closed-form Coulomb averages.

Newton's shell theorem is the workhorse: a radially symmetric probability
density averaged against a Coulomb potential whose center lies outside the
density's support ball gives exactly charge/distance. ``shell_average`` is
the closed form; the quadrature in :func:`fermilearn.grid.local_average`
is the independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import BoxGrid, Profile
from .quadrature import box_integrate, radial_integrate

__all__ = [
    "Potential", "ZeroPotential", "ConstantPotential", "CoulombCenter",
    "MultiCoulomb", "SoftenedCoulomb", "StepPotential", "TrigPotential",
    "CallablePotential", "HarmonicPotential", "shell_average",
    "RadialShiftFunctional", "radial_shift_value", "h_prime_bounds",
    "h_prime_envelope", "CenterInsideSupportError", "SingularEvaluationError",
]


class CenterInsideSupportError(ValueError):
    """Shell closed form requested with a Coulomb center inside the support ball."""


class SingularEvaluationError(ZeroDivisionError):
    """Pointwise evaluation requested exactly at a Coulomb center."""


class Potential:
    """Base class: vectorized pointwise evaluation on ``(N, d)`` arrays."""

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        x = np.asarray(x, float)
        if x.ndim == 0:
            x = x[None]
        if x.ndim == 1:
            return float(self.evaluate(x[None, :])[0])
        return self.evaluate(x)


@dataclass(frozen=True)
class ZeroPotential(Potential):
    def evaluate(self, points):
        return np.zeros(len(points))


@dataclass(frozen=True)
class ConstantPotential(Potential):
    value: float

    def evaluate(self, points):
        return np.full(len(points), float(self.value))


@dataclass(frozen=True)
class CoulombCenter:
    """One ion: charge ``lambda > 0`` at position ``y``."""

    charge: float
    position: tuple

    def __post_init__(self):
        if self.charge <= 0:
            raise ValueError(f"charge must be positive, got {self.charge}")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))


class MultiCoulomb(Potential):
    """``V(x) = sum_k lambda_k / ||x - y_k||`` with positive charges.

    Parameters
    ----------
    centers:
        Sequence of :class:`CoulombCenter`.
    min_separation:
        Declared ``y_*``; when given, pairwise distances are validated
        against it.
    """

    def __init__(self, centers: Sequence[CoulombCenter], min_separation=None,
                 validate_separation=True):
        centers = tuple(centers)
        if not centers:
            raise ValueError("need at least one Coulomb center")
        self.centers = centers
        self.min_separation = min_separation
        if validate_separation and min_separation is not None and len(centers) > 1:
            if self.pairwise_min_distance() < min_separation - 1e-12:
                raise ValueError(
                    f"centers closer than declared separation {min_separation}")

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.centers], float)

    @property
    def charges(self) -> np.ndarray:
        return np.array([c.charge for c in self.centers], float)

    def pairwise_min_distance(self) -> float:
        pos = self.positions
        if len(pos) < 2:
            return np.inf
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())

    def evaluate(self, points):
        points = np.asarray(points, float)
        dist = np.linalg.norm(points[:, None, :] - self.positions[None, :, :], axis=-1)
        if np.any(dist == 0.0):
            raise SingularEvaluationError("evaluation exactly at a Coulomb center")
        return (self.charges[None, :] / dist).sum(axis=1)


class SoftenedCoulomb(Potential):
    """``sum_k lambda_k / sqrt(||x - y_k||^2 + a^2)``; used by the dynamics only."""

    def __init__(self, centers: Sequence[CoulombCenter], softening: float):
        if softening <= 0:
            raise ValueError("softening scale must be positive")
        self.centers = tuple(centers)
        self.softening = float(softening)

    @classmethod
    def from_coulomb(cls, V: MultiCoulomb, softening: float) -> "SoftenedCoulomb":
        return cls(V.centers, softening)

    def evaluate(self, points):
        points = np.asarray(points, float)
        pos = np.array([c.position for c in self.centers], float)
        lam = np.array([c.charge for c in self.centers], float)
        d2 = ((points[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
        return (lam[None, :] / np.sqrt(d2 + self.softening ** 2)).sum(axis=1)


class StepPotential(Potential):
    """Piecewise constant on the boxes of a grid; zero outside the domain."""

    def __init__(self, grid: BoxGrid, values: np.ndarray):
        values = np.asarray(values, float)
        if values.shape != (grid.m,) * grid.d:
            raise ValueError(
                f"values must have shape {(grid.m,) * grid.d}, got {values.shape}")
        self.grid = grid
        self.values = values

    def value_at_box(self, j) -> float:
        self.grid.require_index(j)
        return float(self.values[tuple(j)])

    def evaluate(self, points):
        points = np.asarray(points, float)
        idx = np.floor(points / self.grid.ell).astype(int)
        inside = np.all((idx >= 0) & (idx < self.grid.m), axis=1)
        out = np.zeros(len(points))
        if np.any(inside):
            sel = tuple(idx[inside].T)
            out[inside] = self.values[sel]
        return out


class TrigPotential(Potential):
    """``V(x) = Re sum_i lambda_i exp(2 pi i k_i . x)``.

    Physically meaningful instances use conjugate-paired frequencies so the
    imaginary part cancels; the evaluation takes the real part regardless.
    """

    def __init__(self, frequencies, coefficients):
        self.frequencies = np.atleast_2d(np.asarray(frequencies, float))
        self.coefficients = np.asarray(coefficients, complex)
        if len(self.frequencies) != len(self.coefficients):
            raise ValueError("one coefficient per frequency required")

    def evaluate(self, points):
        points = np.asarray(points, float)
        phases = np.exp(2j * np.pi * points @ self.frequencies.T)
        return np.real(phases @ self.coefficients)


class CallablePotential(Potential):
    """Black-box potential with a user-declared Lipschitz constant.

    The constant is trusted as an input of the step-function guarantee,
    never estimated.
    """

    def __init__(self, fn: Callable, lipschitz: float):
        self.fn = fn
        self.lipschitz = float(lipschitz)

    def evaluate(self, points):
        points = np.asarray(points, float)
        return np.asarray(self.fn(points), float)


class HarmonicPotential(CallablePotential):
    """``V(x) = strength * ||x - center||^2`` (smooth test potential)."""

    def __init__(self, center, strength=1.0, domain_diameter=None):
        center = np.asarray(center, float)
        lip = (2.0 * abs(strength) * domain_diameter
               if domain_diameter is not None else np.inf)
        super().__init__(
            lambda pts: strength * ((np.asarray(pts) - center) ** 2).sum(axis=-1),
            lipschitz=lip,
        )
        self.center = center
        self.strength = float(strength)


def shell_average(V: MultiCoulomb, p, support_radius: float) -> float:
    """Closed-form local average at midpoint ``p``: ``sum_k lambda_k / ||p - y_k||``.

    Valid exactly when every center lies outside the support ball of the
    (radially symmetric) density centered at ``p``; otherwise the caller
    must fall back to quadrature.
    """
    p = np.asarray(p, float)
    dist = np.linalg.norm(V.positions - p[None, :], axis=1)
    if np.any(dist <= support_radius):
        raise CenterInsideSupportError(
            f"center at distance {dist.min():.6g} <= support radius {support_radius}")
    return float((V.charges / dist).sum())


@dataclass(frozen=True)
class RadialShiftFunctional:
    """``H(r, v) = int g(||x||) / ||x - r v|| dx`` for an L1-normalized radial g.

    ``g`` is the density of ``profile`` at unit scale (support radius 1/2);
    defined for d = 3 where the Coulomb kernel's sphere averages are exact.
    """

    profile: Profile
    direction: tuple
    radius: float

    def __post_init__(self):
        v = np.asarray(self.direction, float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "direction", tuple(v))


def radial_shift_value(F: RadialShiftFunctional, method: str = "radial") -> float:
    """Evaluate ``H(r, v)``.

    ``method="radial"`` uses the exact sphere-average reduction
    ``int g(s) 4 pi s^2 / max(s, r) ds`` (valid for any r, including inside
    the support). ``method="cartesian"`` integrates the 3D integrand by
    tensor quadrature and requires ``r`` outside the support ball; it exists
    so radial symmetry can be checked against a v-dependent formula.
    """
    prof, r = F.profile, F.radius
    rs = prof.support_radius
    if method == "radial":
        if r > rs:
            return 1.0 / r

        def fn(s):
            return prof.density(s) * 4.0 * np.pi * s ** 2 / np.maximum(s, r)

        pts = [r] if 0.0 < r < rs else []
        pts += [rs * q for q in (0.9, 0.96, 0.98, 0.998)]
        return radial_integrate(fn, 0.0, rs, splits=tuple(sorted(pts)))
    if method == "cartesian":
        if r <= rs:
            raise ValueError("cartesian path needs the shift outside the support ball")
        v = np.asarray(F.direction, float)

        def fn(pts):
            s = np.linalg.norm(pts, axis=-1)
            dens = prof.density(s)
            out = np.zeros(len(pts))
            mask = dens > 0
            out[mask] = dens[mask] / np.linalg.norm(pts[mask] - r * v, axis=-1)
            return out

        val, _, ok = box_integrate(fn, [-rs] * 3, [rs] * 3, rel_tol=1e-10)
        if not ok:
            raise RuntimeError("cartesian radial-shift quadrature stalled")
        return float(val)
    raise ValueError(f"unknown method {method!r}")


def h_prime_bounds(r: float, r_star: float) -> tuple:
    """Displayed bracket for ``H'(r)``: ``(-r/(r-r*), -(r-r*)/(r*+r))``.

    Note the companion numeric check uses :func:`h_prime_envelope`; the
    displayed simplification is not a valid envelope of the derivative.
    """
    if r <= r_star:
        raise ValueError(f"need r > r_star, got r={r}, r_star={r_star}")
    return (-r / (r - r_star), -(r - r_star) / (r_star + r))


def h_prime_envelope(r: float, r_star: float) -> tuple:
    """Rigorous bracket ``(-(r+r*)/(r-r*)^3, -(r-r*)/(r+r*)^3)`` for ``H'(r)``."""
    if r <= r_star:
        raise ValueError(f"need r > r_star, got r={r}, r_star={r_star}")
    return (-(r_star + r) / (r - r_star) ** 3, -(r - r_star) / (r_star + r) ** 3)
