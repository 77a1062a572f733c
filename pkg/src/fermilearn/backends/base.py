"""Shared measurement-setting type and orbital evolution engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import BoxGrid, Orbital, Profile
from ..dynamics import (DEFAULT_DT, PropagatorPlan, SpectralGrid, Wavefunction,
                        discretize, evolve)

__all__ = ["PAIRS", "MeasurementSetting", "OrbitalEngine"]

PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class MeasurementSetting:
    """One measurement configuration: triple, box pair, evolution time, mode."""

    triple: tuple   # three box indices, labels alpha = 0, 1, 2
    pair: tuple     # (alpha, beta), ordered
    time: float
    mode: str = "sequential"

    def __post_init__(self):
        if tuple(self.pair) not in PAIRS:
            raise ValueError(f"pair must be one of {PAIRS}, got {self.pair}")
        if len(self.triple) != 3:
            raise ValueError("triple must contain exactly three boxes")
        if self.time < 0:
            raise ValueError("evolution time must be nonnegative")
        if self.mode not in ("sequential", "parallel"):
            raise ValueError(f"unknown mode {self.mode!r}")


class OrbitalEngine:
    """Discretizes and evolves box orbitals on a shared spectral grid.

    Evolved wavefunctions are cached by ``(box, t)``; the potential and
    propagator plan policy are fixed per engine.
    """

    def __init__(self, grid: BoxGrid, profile: Profile, V,
                 sgrid: SpectralGrid = None, dt_max: float = DEFAULT_DT,
                 n_points: int = None):
        self.grid = grid
        self.profile = profile
        self.V = V
        self.sgrid = sgrid or SpectralGrid.for_box_grid(grid, n=n_points)
        self.dt_max = dt_max
        self._initial: dict = {}
        self._evolved: dict = {}

    def initial(self, box) -> Wavefunction:
        box = tuple(box)
        if box not in self._initial:
            orb = Orbital(grid=self.grid, box=box, profile=self.profile)
            self._initial[box] = discretize(orb, self.sgrid)
        return self._initial[box]

    def evolved(self, box, t: float) -> Wavefunction:
        key = (tuple(box), float(t))
        if key not in self._evolved:
            plan = PropagatorPlan.for_time(t, self.dt_max)
            self._evolved[key] = evolve(self.initial(box), self.V, t, plan)
        return self._evolved[key]

    def weighted(self, wf: Wavefunction) -> np.ndarray:
        """Flat vector scaled so the standard complex dot is the L2 product."""
        return wf.flat() * np.sqrt(self.sgrid.weight)

    def region_mask(self, boxes) -> np.ndarray:
        """Flat boolean mask of grid points lying in the union of ``boxes``."""
        pts = self.sgrid.points()
        idx = np.floor(pts / self.grid.ell).astype(int)
        mask = np.zeros(len(pts), bool)
        for b in boxes:
            mask |= np.all(idx == np.asarray(b, int)[None, :], axis=1)
        return mask
