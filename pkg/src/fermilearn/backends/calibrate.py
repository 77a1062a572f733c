"""Calibration of the first-derivative constant kappa.

The finite-difference estimator assumes

    d/dt p^{ab}(t) |_{t=0} = kappa * (omega_a + omega_b + 2 T_kin),

and the protocol inverts that relation. The constant is measured against
the dense Fock oracle (regional projector) by Richardson extrapolation of
(p(t) - 1/2)/t over a shrinking time ladder, for a zero and a harmonic
potential and all three pairs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .base import PAIRS, MeasurementSetting
from .fock import DenseFockBackend
from ..grid import BoxGrid, Orbital, Profile, kinetic_energy, local_average
from ..potentials import HarmonicPotential, ZeroPotential

__all__ = ["CalibrationReport", "calibrate_derivative_constant", "DEFAULT_KAPPA"]

# dense-Fock-calibrated value for the shipped profile; see CalibrationReport
DEFAULT_KAPPA = 0.5


@dataclass
class CalibrationReport:
    kappa: float
    kappa_by_case: dict
    max_pair_spread: float
    fit_residual: float
    tkin: float
    backend: str
    grid: dict
    times: tuple

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, path):
        return cls(**json.loads(Path(path).read_text()))


class CalibrationError(RuntimeError):
    pass


def calibrate_derivative_constant(grid: BoxGrid = None, profile: Profile = None,
                                  potentials=None, times=(2e-3, 1e-3, 5e-4),
                                  n_points=None, residual_tol=0.05) -> CalibrationReport:
    """Fit kappa from short-time finite differences of the dense Fock oracle.

    Returns the calibrated constant and per-(potential, pair) values; raises
    when the Richardson ladder is inconsistent (fit residual above tol).
    """
    if grid is None:
        grid = BoxGrid(L=3.0, m=3, d=1)
    if profile is None:
        profile = Profile.default_bump(grid.d)
    if potentials is None:
        potentials = {
            "zero": ZeroPotential(),
            "harmonic": HarmonicPotential(center=[0.5 * grid.L] * grid.d,
                                          strength=0.4),
        }
    triple = tuple((i,) * grid.d for i in range(3)) if grid.m >= 3 else None
    if triple is None:
        raise ValueError("calibration grid needs at least three boxes per axis")

    tkin = kinetic_energy(Orbital(grid=grid, box=triple[0], profile=profile))
    by_case = {}
    worst_resid = 0.0
    for name, V in potentials.items():
        backend = DenseFockBackend(grid, profile, V, projector="regional",
                                   n_points=n_points)
        omegas = [local_average(V, Orbital(grid=grid, box=b, profile=profile))
                  for b in triple]
        for pair in PAIRS:
            denom = omegas[pair[0]] + omegas[pair[1]] + 2.0 * tkin
            diffs = []
            for t in times:
                p = backend.probability(MeasurementSetting(
                    triple=triple, pair=pair, time=t))
                diffs.append((p - 0.5) / t)
            # D(t) = D0 + (t/2) p'' + O(t^2): Richardson on consecutive halvings
            extrap = []
            for i in range(len(times) - 1):
                r = times[i] / times[i + 1]
                extrap.append((r * diffs[i + 1] - diffs[i]) / (r - 1.0))
            d0 = extrap[-1]
            resid = max(abs(e - d0) for e in extrap) / max(abs(d0), 1e-12)
            worst_resid = max(worst_resid, resid)
            by_case[f"{name}:{pair[0]}{pair[1]}"] = d0 / denom
    if worst_resid > residual_tol:
        raise CalibrationError(
            f"Richardson residual {worst_resid:.3e} above {residual_tol}")

    values = np.array(list(by_case.values()))
    kappa = float(values.mean())
    return CalibrationReport(
        kappa=kappa,
        kappa_by_case={k: float(v) for k, v in by_case.items()},
        max_pair_spread=float(values.max() - values.min()),
        fit_residual=float(worst_resid),
        tkin=float(tkin),
        backend="dense_fock/regional",
        grid={"L": grid.L, "m": grid.m, "d": grid.d},
        times=tuple(times),
    )
