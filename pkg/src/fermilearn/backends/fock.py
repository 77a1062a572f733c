"""Dense Fock-space oracle for the measurement probabilities.

The evolved pair orbitals (split-step propagated on the spectral grid) are
assembled into a region-adapted orthonormal mode basis: every mode lies
wholly inside or wholly outside the measured region, so the regional
vacuum projector acts exactly on the represented subspace. The state is
the exact Fock composition

    psi_t = 2^(-|J|/2) prod_j (1 + adag(f^a_j(t)) adag(f^b_j(t))) |vac>,

followed by the pair rotation W and the projector.
"""

from __future__ import annotations

import numpy as np

from .base import MeasurementSetting, OrbitalEngine
from ..fockspace import MAX_MODES, DenseFockSpace

__all__ = ["DenseFockBackend", "fock_dense_probability", "TruncationError"]

_RANK_TOL = 1e-11


class TruncationError(RuntimeError):
    """Mode subspace failed to capture the evolved orbitals."""


def _orthonormal_columns(cols):
    """SVD-orthonormalize a list of vectors; drops numerically null directions."""
    if not cols:
        return np.zeros((0, 0))
    mat = np.stack(cols, axis=1)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    keep = s > _RANK_TOL * s[0]
    return u[:, keep]


class DenseFockBackend:
    """Exact Fock oracle; ``projector`` is ``"regional"`` (default) or ``"global"``."""

    name = "dense_fock"

    def __init__(self, grid, profile, V, sgrid=None, projector="regional",
                 triples=None, dt_max=None, n_points=None,
                 truncation_threshold=1e-6):
        if projector not in ("regional", "global"):
            raise ValueError(f"unknown projector convention {projector!r}")
        kwargs = {}
        if dt_max is not None:
            kwargs["dt_max"] = dt_max
        self.engine = OrbitalEngine(grid, profile, V, sgrid=sgrid,
                                    n_points=n_points, **kwargs)
        self.projector = projector
        self.triples = triples
        self.truncation_threshold = truncation_threshold
        self.last_truncation_error = None

    def _state_triples(self, setting: MeasurementSetting):
        if setting.mode == "sequential":
            return [tuple(setting.triple)]
        if self.triples is None:
            raise ValueError("parallel mode requires the backend to know all triples")
        state = [tuple(t) for t in self.triples]
        if tuple(setting.triple) not in state:
            raise ValueError("measured triple is not part of the prepared state")
        return state

    def probability(self, setting: MeasurementSetting) -> float:
        return self._probability(setting, setting.time)

    def probability_signed(self, triple, pair, t: float,
                           mode: str = "sequential") -> float:
        """Evaluate at a signed time (calibration stencils)."""
        setting = MeasurementSetting(triple=tuple(triple), pair=tuple(pair),
                                     time=abs(t), mode=mode)
        return self._probability(setting, t)

    def _probability(self, setting: MeasurementSetting, t: float) -> float:
        eng = self.engine
        alpha, beta = setting.pair
        state_triples = self._state_triples(setting)

        static = [eng.weighted(eng.initial(setting.triple[alpha])),
                  eng.weighted(eng.initial(setting.triple[beta]))]
        evolved = []
        for tri in state_triples:
            evolved.append(eng.weighted(eng.evolved(tri[alpha], t)))
            evolved.append(eng.weighted(eng.evolved(tri[beta], t)))

        mask = eng.region_mask([setting.triple[alpha], setting.triple[beta]])
        inside = _orthonormal_columns(
            [v * mask for v in static + evolved if np.any(v * mask)])
        outside = _orthonormal_columns(
            [v * ~mask for v in static + evolved if np.any(v * ~mask)])
        modes = np.concatenate(
            [m for m in (inside, outside) if m.size], axis=1)
        region_flags = ([True] * inside.shape[1] + [False] * outside.shape[1])

        n_modes = modes.shape[1]
        if n_modes > MAX_MODES:
            raise TruncationError(
                f"{n_modes} modes exceed the dense budget of {MAX_MODES}")

        def coeff(v):
            return modes.conj().T @ v

        defect = 0.0
        for v in evolved:
            c = coeff(v)
            defect = max(defect, abs(float(np.vdot(v, v).real) - float(np.vdot(c, c).real)))
        self.last_truncation_error = defect
        if defect > self.truncation_threshold:
            raise TruncationError(
                f"captured-norm defect {defect:.3e} above threshold")

        space = DenseFockSpace(n_modes)
        pairs = [(coeff(evolved[2 * i]), coeff(evolved[2 * i + 1]))
                 for i in range(len(state_triples))]
        psi = space.pair_state(pairs)
        psi = space.apply_pair_rotation(psi, coeff(static[0]), coeff(static[1]),
                                        np.pi / 4.0)
        if self.projector == "regional":
            region_modes = [i for i, f in enumerate(region_flags) if f]
            psi = space.project_regional_vacuum(psi, region_modes)
            return float(np.vdot(psi, psi).real)
        return float(abs(psi[0]) ** 2)


def fock_dense_probability(setting: MeasurementSetting, grid, profile, V,
                           sgrid=None, projector="regional", triples=None,
                           n_points=None) -> float:
    """One-shot convenience wrapper around :class:`DenseFockBackend`."""
    return DenseFockBackend(grid, profile, V, sgrid=sgrid, projector=projector,
                            triples=triples, n_points=n_points).probability(setting)
