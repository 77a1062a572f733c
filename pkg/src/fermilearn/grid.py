"""Spatial discretization: box grid, triple partition, bump profile, orbitals.

The learning domain ``[0, L]^d`` is split into ``m^d`` boxes of side
``ell = L/m``. Each box ``B_j`` carries one prepared orbital: a fixed
radially symmetric bump profile, rescaled to the box and L2-normalized.
Boxes are grouped into disjoint triples measured jointly by the protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .quadrature import QuadratureError, box_integrate

__all__ = [
    "BoxGrid", "BoxIndex", "TripleSet", "Profile", "Orbital",
    "build_grid", "box_midpoint", "partition_triples", "orbital_eval",
    "local_average", "kinetic_energy", "box_index_list", "coulomb_box_average",
]

# A box index is a plain d-tuple of ints in {0..m-1}; kept as tuples so they
# hash and sort naturally.
BoxIndex = tuple

_SPHERE_SURFACE = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}

# quad needs breakpoints near the essential singularity of the bump edge
_EDGE_POINTS = [0.2, 0.3, 0.4, 0.45, 0.48, 0.49, 0.495, 0.499]


@dataclass(frozen=True)
class BoxGrid:
    """Partition of ``[0, L]^d`` into ``m^d`` boxes of side ``ell = L/m``."""

    L: float
    m: int
    d: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.L <= 0:
            raise ValueError(f"domain side length must be positive, got {self.L}")
        if self.m < 1:
            raise ValueError(f"boxes per axis must be >= 1, got {self.m}")

    @property
    def ell(self) -> float:
        return self.L / self.m

    @property
    def n_boxes(self) -> int:
        return self.m ** self.d

    def contains_index(self, j) -> bool:
        return len(j) == self.d and all(0 <= c < self.m for c in j)

    def require_index(self, j):
        if not self.contains_index(j):
            raise IndexError(f"box index {j} out of range for m={self.m}, d={self.d}")

    def box_low(self, j) -> np.ndarray:
        self.require_index(j)
        return self.ell * np.asarray(j, float)

    def midpoint(self, j) -> np.ndarray:
        """Center ``p_j = ell * (j + 1/2)`` of box ``B_j``."""
        self.require_index(j)
        return self.ell * (np.asarray(j, float) + 0.5)


def build_grid(L: float, m: int, d: int) -> BoxGrid:
    """Build the ``m^d`` partition of ``[0, L]^d``."""
    return BoxGrid(L=float(L), m=int(m), d=int(d))


def box_midpoint(grid: BoxGrid, j) -> np.ndarray:
    return grid.midpoint(j)


def box_index_list(grid: BoxGrid) -> list:
    """Canonical box enumeration: first axis varies fastest.

    Consecutive runs of three in this order are adjacent along the first
    axis (wrapping across rows), which is the triple pattern used throughout.
    """
    m, d = grid.m, grid.d
    out = []
    for n in range(m ** d):
        j = []
        q = n
        for _ in range(d):
            j.append(q % m)
            q //= m
        out.append(tuple(j))
    return out


@dataclass(frozen=True)
class TripleSet:
    """Disjoint triples of boxes plus the uncovered remainder."""

    triples: tuple
    remainder: tuple

    def __len__(self):
        return len(self.triples)

    def all_boxes(self):
        seen = []
        for t in self.triples:
            seen.extend(t)
        seen.extend(self.remainder)
        return seen


def partition_triples(grid: BoxGrid) -> TripleSet:
    """Group boxes into runs of three along the canonical enumeration.

    ``m^d mod 3`` boxes are left over and reported as the remainder; labels
    alpha = 0, 1, 2 inside each triple follow enumeration order.
    """
    boxes = box_index_list(grid)
    n_full = len(boxes) // 3
    triples = tuple(tuple(boxes[3 * i: 3 * i + 3]) for i in range(n_full))
    remainder = tuple(boxes[3 * n_full:])
    return TripleSet(triples=triples, remainder=remainder)


def _bump_raw(r):
    """Unnormalized radial bump ``exp(1/((2r)^2 - 1))`` on ``r < 1/2``."""
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 0.5
    u = 4.0 * r[inside] ** 2 - 1.0
    out[inside] = np.exp(1.0 / u)
    return out


def _bump_raw_deriv(r):
    # d/dr exp(1/(4r^2-1)) = -8r/(4r^2-1)^2 * exp(1/(4r^2-1))
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 0.5
    u = 4.0 * r[inside] ** 2 - 1.0
    out[inside] = -8.0 * r[inside] / u ** 2 * np.exp(1.0 / u)
    return out


@dataclass(frozen=True)
class Profile:
    """Radially symmetric bump on the unit box, L2-normalized for dimension d.

    ``radial_fn`` is the unnormalized radial function on ``[0, 1/2]``;
    ``normalization`` scales it so the d-dimensional orbital has unit L2
    norm. The support radius is fixed at 1/2 (inscribed ball), so the
    orbital vanishes on the unit-box boundary.
    """

    d: int
    radial_fn: object = field(repr=False, default=None)
    radial_deriv: object = field(repr=False, default=None)
    normalization: float = None
    support_radius: float = 0.5

    @classmethod
    @lru_cache(maxsize=None)
    def default_bump(cls, d: int) -> "Profile":
        surf = _SPHERE_SURFACE[d]
        val, _ = quad(lambda r: _bump_raw(r) ** 2 * surf * r ** (d - 1),
                      0.0, 0.5, points=_EDGE_POINTS, limit=300,
                      epsabs=1e-15, epsrel=1e-13)
        return cls(d=d, radial_fn=_bump_raw, radial_deriv=_bump_raw_deriv,
                   normalization=1.0 / math.sqrt(val))

    def value(self, r):
        """Normalized radial value ``f~(r)``."""
        return self.normalization * self.radial_fn(r)

    def density(self, r):
        """Radial probability density ``g(r) = f~(r)^2`` (L1-normalized in d dims)."""
        return self.value(r) ** 2

    def deriv(self, r):
        if self.radial_deriv is None:
            raise ValueError("profile has no radial derivative")
        return self.normalization * self.radial_deriv(r)

    def unit_eval(self, x):
        """Profile on the unit box: ``f(x) = f~(||x - center||)``, x shape (N, d)."""
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x - 0.5, axis=-1)
        return self.value(r)

    @lru_cache(maxsize=None)
    def kinetic_unit(self) -> float:
        """Reference kinetic energy ``<f, (-Delta) f>`` at unit box side.

        Radial reduction: ``int |f~'(r)|^2 S_d r^(d-1) dr``. Box side ``ell``
        scales this by ``ell^-2``.
        """
        surf = _SPHERE_SURFACE[self.d]
        val, _ = quad(lambda r: self.deriv(r) ** 2 * surf * r ** (self.d - 1),
                      0.0, 0.5, points=_EDGE_POINTS, limit=300,
                      epsabs=1e-14, epsrel=1e-12)
        return val

    @lru_cache(maxsize=None)
    def inverse_radius_moment(self) -> float:
        """``E_g[1/r]`` at unit box side (3D): the Coulomb self-average.

        Equals ``int g(r) 4 pi r dr``; the d-dim orbital in a box of side
        ``ell`` averaged against a Coulomb center at its own midpoint gives
        ``inverse_radius_moment() / ell``.
        """
        if self.d != 3:
            raise ValueError("Coulomb self-average defined for d=3 only")
        val, _ = quad(lambda r: self.density(r) * 4.0 * np.pi * r,
                      0.0, 0.5, points=_EDGE_POINTS, limit=300,
                      epsabs=1e-15, epsrel=1e-13)
        return val

    @lru_cache(maxsize=None)
    def abs_position_moment(self) -> float:
        """``int |f(x)|^2 ||x|| dx`` over the unit box (origin at the box corner)."""
        def fn(pts):
            return self.unit_eval(pts) ** 2 * np.linalg.norm(pts, axis=-1)
        val, _, ok = box_integrate(fn, [0.0] * self.d, [1.0] * self.d,
                                   rel_tol=1e-10)
        if not ok:
            raise QuadratureError("position moment did not converge")
        return float(val)


@dataclass(frozen=True)
class Orbital:
    """Profile rescaled into box ``B_j``: ``f_j(x) = ell^(-d/2) f(x/ell - j)``."""

    grid: BoxGrid
    box: tuple
    profile: Profile

    def __post_init__(self):
        self.grid.require_index(self.box)
        if self.profile.d != self.grid.d:
            raise ValueError("profile dimension does not match grid")

    @property
    def center(self) -> np.ndarray:
        return self.grid.midpoint(self.box)

    @property
    def support_radius(self) -> float:
        return self.profile.support_radius * self.grid.ell

    def __call__(self, x):
        return orbital_eval(self, x)

    def density_at(self, x):
        """``|f_j(x)|^2``, vectorized over points."""
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x - self.center, axis=-1) / self.grid.ell
        return self.grid.ell ** (-self.grid.d) * self.profile.density(r)


def orbital_eval(orb: Orbital, x):
    """Evaluate ``f_j`` at one point or an ``(N, d)`` batch."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    ell, d = orb.grid.ell, orb.grid.d
    vals = ell ** (-d / 2.0) * orb.profile.unit_eval(pts / ell - np.asarray(orb.box, float))
    return float(vals[0]) if single else vals


def kinetic_energy(orb: Orbital) -> float:
    """``<f_j, (-Delta) f_j> = ell^-2 <f, (-Delta) f>``."""
    return orb.profile.kinetic_unit() / orb.grid.ell ** 2


def coulomb_box_average(orb: Orbital, dist: float) -> float:
    """Average of ``1/||x - y||`` against ``|f_j|^2``, center at distance ``dist``.

    Sphere averaging (Newton) reduces the 3D integral to a radial one valid
    for the center anywhere, including inside the support ball:
    ``int g_ell(r) 4 pi r^2 / max(r, dist) dr``.
    """
    ell = orb.grid.ell
    rs = orb.support_radius
    if dist >= rs:
        return 1.0 / dist
    surf = 4.0 * np.pi

    def fn(r):
        dens = orb.profile.density(r / ell) / ell ** 3
        return dens * surf * r ** 2 / np.maximum(r, dist)

    pts = [dist] if 0.0 < dist < rs else []
    pts += [rs * p for p in (0.9, 0.96, 0.98, 0.998)]
    from .quadrature import radial_integrate
    return radial_integrate(fn, 0.0, rs, splits=tuple(sorted(pts)))


def local_average(V, orb: Orbital, rel_tol: float = 1e-8) -> float:
    """Local average ``omega_j = int |f_j(x)|^2 V(x) dx``.

    Adaptive tensor quadrature over the support box, with panels split at
    Coulomb-center projections. A Coulomb center inside the support ball is
    integrable but not tensor-friendly; that term goes through the exact
    radial reduction instead.

    Raises
    ------
    QuadratureError
        When the adaptive rule stalls above ``rel_tol``.
    """
    from . import potentials as pot

    grid = orb.grid
    lows = grid.box_low(orb.box)
    highs = lows + grid.ell
    center = orb.center
    rs = orb.support_radius

    if isinstance(V, pot.MultiCoulomb):
        # term-wise: tensor quadrature for outside centers, radial reduction
        # for centers inside the support ball (singular but radial-friendly)
        total = 0.0
        outside = []
        for c in V.centers:
            dist = float(np.linalg.norm(center - c.position))
            if dist < rs:
                total += c.charge * coulomb_box_average(orb, dist)
            else:
                outside.append(c)
        if outside:
            sub = pot.MultiCoulomb(tuple(outside), validate_separation=False)
            total += _tensor_local_average(sub, orb, lows, highs, rel_tol)
        return total

    return _tensor_local_average(V, orb, lows, highs, rel_tol)


def _tensor_local_average(V, orb, lows, highs, rel_tol):
    from . import potentials as pot

    splits = None
    if isinstance(V, pot.MultiCoulomb):
        splits = [
            tuple(float(c.position[ax]) for c in V.centers)
            for ax in range(orb.grid.d)
        ]

    def fn(pts):
        dens = orb.density_at(pts)
        out = np.zeros(len(pts))
        mask = dens > 0.0
        if np.any(mask):
            out[mask] = dens[mask] * V.evaluate(pts[mask])
        return out

    val, err, ok = box_integrate(fn, lows, highs, rel_tol=rel_tol, splits=splits)
    if not ok:
        raise QuadratureError(
            f"local average stalled at relative change {err / max(abs(val), 1e-300):.3e}",
            achieved=err,
        )
    return float(val)
