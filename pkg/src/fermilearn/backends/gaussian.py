"""Gaussian (Wick/Pfaffian) evaluation of the measurement probabilities.

The prepared states are fermionic Gaussian: each triple contributes a
vacuum/pair superposition ``(1 + adag(g_a) adag(g_b))/sqrt(2)``, the
controlled displacement W is a quadratic rotation, and the regional vacuum
projector is the ordered product ``prod_r a_r adag_r`` over any orthonormal
basis of the region. Wick's theorem turns its expectation into a Pfaffian
of pairwise contractions; the contractions are low-rank in the pair
orbitals, so the evaluation scales with the region size, not the mode
count.

Sign and normalization conventions are pinned by cross-validation against
the dense Fock oracle before first use (see :meth:`GaussianBackend.ensure_validated`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import MeasurementSetting, OrbitalEngine
from ..fockspace import DenseFockSpace
from ..pfaffian import pfaffian

__all__ = ["GaussianStateSpec", "GaussianState", "GaussianBackend",
           "gaussian_probability", "ConventionValidationError"]

_ORTHO_TOL = 1e-9


class ConventionValidationError(RuntimeError):
    """Gaussian backend disagreed with the dense Fock oracle."""


@dataclass(frozen=True)
class GaussianStateSpec:
    """Abstract N-mode instance: pairing/Slater state, region, optional rotation.

    ``pairs`` are 2-tuples of coefficient vectors (the whole collection must
    be orthonormal); ``slater`` lists occupied orbitals of a determinant on
    modes orthogonal to all pair orbitals. ``rotation`` is ``(wa, wb, angle)``
    applying ``exp(i angle (adag(wa) adag(wb) + h.c.))`` before measurement.
    """

    n: int
    pairs: tuple = ()
    slater: tuple = ()
    region: tuple = ()
    rotation: tuple = None

    def orbital_matrix(self) -> np.ndarray:
        cols = [g for p in self.pairs for g in p] + list(self.slater)
        if not cols:
            return np.zeros((self.n, 0), complex)
        return np.stack([np.asarray(c, complex) for c in cols], axis=1)

    def validate(self):
        mat = self.orbital_matrix()
        if mat.size:
            gram = mat.conj().T @ mat
            if np.max(np.abs(gram - np.eye(mat.shape[1]))) > _ORTHO_TOL:
                raise ValueError("pair/slater orbitals must be orthonormal")
        if any(not 0 <= r < self.n for r in self.region):
            raise ValueError("region indices out of range")
        if self.rotation is not None:
            wa, wb, _ = self.rotation
            w = np.stack([np.asarray(wa, complex), np.asarray(wb, complex)], axis=1)
            if np.max(np.abs(w.conj().T @ w - np.eye(2))) > _ORTHO_TOL:
                raise ValueError("rotation vectors must be orthonormal")


@dataclass
class GaussianState:
    """Majorana covariance of an even Gaussian state.

    Convention: ``c_{2m} = a_m + adag_m``, ``c_{2m+1} = -i (a_m - adag_m)``,
    ``cov[p, q] = (i/2) <[c_p, c_q]>``. Real antisymmetric; the eigenvalues
    of ``i . cov`` lie in ``[-1, 1]`` (at the endpoints for pure states).
    """

    mode_count: int
    covariance: np.ndarray = field(repr=False)

    @classmethod
    def from_correlations(cls, C: np.ndarray, F: np.ndarray) -> "GaussianState":
        """Build from ``C[i,j] = <adag_i a_j>`` and ``F[i,j] = <a_i a_j>``."""
        n = C.shape[0]
        two = np.zeros((2 * n, 2 * n), complex)  # <c_p c_q>
        delta = np.eye(n)
        a_adag = delta - C.T          # <a_i adag_j>
        adag_adag = -np.conj(F)       # <adag_i adag_j>
        two[0::2, 0::2] = F + a_adag + C + adag_adag
        two[0::2, 1::2] = -1j * (F - a_adag + C - adag_adag)
        two[1::2, 0::2] = -1j * (F + a_adag - C - adag_adag)
        two[1::2, 1::2] = -(F - a_adag - C + adag_adag)
        cov = 1j * (two - np.eye(2 * n))
        herm_defect = np.max(np.abs(np.imag(cov)))
        if herm_defect > 1e-9:
            raise ValueError(f"covariance has imaginary part {herm_defect:.3e}")
        return cls(mode_count=n, covariance=np.real(cov))

    def validate(self, tol: float = 1e-9):
        cov = self.covariance
        if np.max(np.abs(cov + cov.T)) > tol:
            raise ValueError("covariance is not antisymmetric")
        eig = np.linalg.eigvalsh(1j * cov)
        if eig.min() < -1 - tol or eig.max() > 1 + tol:
            raise ValueError("covariance eigenvalues outside the physical range")


def _spec_probability(spec: GaussianStateSpec) -> float:
    """Vacuum probability of the region for a (rotated) pairing/Slater state."""
    spec.validate()
    region = list(spec.region)
    if not region:
        return 1.0
    k = len(region)

    pair_orbs = [np.asarray(g, complex) for p in spec.pairs for g in p]
    slater_orbs = [np.asarray(g, complex) for g in spec.slater]

    # vector table: region sites then the two rotation vectors
    n_ids = k + (2 if spec.rotation is not None else 0)
    id_of_site = {r: i for i, r in enumerate(region)}

    def site_component(vec, r):
        return vec[r]

    # M[v_id, g] = <vec_id, g>; Gram[v_id, v_id']
    Mp = np.zeros((n_ids, len(pair_orbs)), complex)
    Ms = np.zeros((n_ids, len(slater_orbs)), complex)
    gram = np.zeros((n_ids, n_ids), complex)
    for i, r in enumerate(region):
        for g_idx, g in enumerate(pair_orbs):
            Mp[i, g_idx] = site_component(g, r)
        for g_idx, g in enumerate(slater_orbs):
            Ms[i, g_idx] = site_component(g, r)
        gram[i, i] = 1.0
    if spec.rotation is not None:
        wa, wb, _ = spec.rotation
        wa = np.asarray(wa, complex)
        wb = np.asarray(wb, complex)
        for off, w in ((k, wa), (k + 1, wb)):
            for g_idx, g in enumerate(pair_orbs):
                Mp[off, g_idx] = np.vdot(w, g)
            for g_idx, g in enumerate(slater_orbs):
                Ms[off, g_idx] = np.vdot(w, g)
        gram[k, k] = np.vdot(wa, wa)
        gram[k + 1, k + 1] = np.vdot(wb, wb)
        gram[k, k + 1] = np.vdot(wa, wb)
        gram[k + 1, k] = np.conj(gram[k, k + 1])
        for i, r in enumerate(region):
            gram[i, k] = site_component(wa, r)      # <e_r, wa>
            gram[k, i] = np.conj(gram[i, k])
            gram[i, k + 1] = site_component(wb, r)
            gram[k + 1, i] = np.conj(gram[i, k + 1])

    # base contraction matrices over vector ids
    even, odd = Mp[:, 0::2], Mp[:, 1::2]
    Fm = 0.5 * (odd @ even.T - even @ odd.T)          # <a(u) a(v)>
    Cm = 0.5 * (np.conj(Mp) @ Mp.T)                   # <adag(u) a(v)>
    if slater_orbs:
        Cm = Cm + np.conj(Ms) @ Ms.T
    ACm = gram - Cm.T                                  # <a(u) adag(v)>
    CCm = np.conj(Fm).T                                # <adag(u) adag(v)>

    # operator list: (a_r, adag_r) per region site, W-conjugated
    if spec.rotation is None:
        ann_terms = {i: [(i, "a", 1.0)] for i in range(k)}
    else:
        wa, wb, theta = spec.rotation
        wa = np.asarray(wa, complex)
        wb = np.asarray(wb, complex)
        cos_m1 = np.cos(theta) - 1.0
        isin = 1j * np.sin(theta)
        ann_terms = {}
        for i, r in enumerate(region):
            ca_bar = site_component(wa, r)   # conj(<wa, e_r>)
            cb_bar = site_component(wb, r)
            terms = [(i, "a", 1.0)]
            if ca_bar != 0:
                terms.append((k, "a", cos_m1 * ca_bar))
                terms.append((k + 1, "c", isin * ca_bar))
            if cb_bar != 0:
                terms.append((k + 1, "a", cos_m1 * cb_bar))
                terms.append((k, "c", -isin * cb_bar))
            ann_terms[i] = terms

    n_ops = 2 * k
    coef_a = np.zeros((n_ops, n_ids), complex)
    coef_c = np.zeros((n_ops, n_ids), complex)
    for i in range(k):
        for vid, kind, coef in ann_terms[i]:
            if kind == "a":
                coef_a[2 * i, vid] += coef
            else:
                coef_c[2 * i, vid] += coef
        # creation op is the dagger: kinds flip, coefficients conjugate
        for vid, kind, coef in ann_terms[i]:
            if kind == "a":
                coef_c[2 * i + 1, vid] += np.conj(coef)
            else:
                coef_a[2 * i + 1, vid] += np.conj(coef)

    ordered = (coef_a @ Fm @ coef_a.T + coef_a @ ACm @ coef_c.T
               + coef_c @ Cm @ coef_a.T + coef_c @ CCm @ coef_c.T)
    upper = np.triu(ordered, 1)
    pf_matrix = upper - upper.T
    value = pfaffian(pf_matrix)
    prob = float(np.real(value))
    if abs(np.imag(value)) > 1e-8 or prob < -1e-8 or prob > 1 + 1e-8:
        raise ConventionValidationError(
            f"Pfaffian gave an unphysical probability {value}")
    return min(max(prob, 0.0), 1.0)


def _dense_reference(spec: GaussianStateSpec) -> float:
    """Same instance through the dense Fock oracle (small n only)."""
    space = DenseFockSpace(spec.n)
    psi = space.pair_state(spec.pairs)
    for phi in spec.slater:
        psi = space.cre(phi) @ psi
    if spec.rotation is not None:
        wa, wb, theta = spec.rotation
        psi = space.apply_pair_rotation(psi, wa, wb, theta)
    psi = space.project_regional_vacuum(psi, spec.region)
    return float(np.vdot(psi, psi).real)


class GaussianBackend:
    """Pfaffian backend for protocol probabilities and abstract instances."""

    name = "gaussian"
    _conventions_ok = False

    def __init__(self, grid=None, profile=None, V=None, sgrid=None,
                 triples=None, dt_max=None, n_points=None):
        self.engine = None
        if grid is not None:
            kwargs = {}
            if dt_max is not None:
                kwargs["dt_max"] = dt_max
            self.engine = OrbitalEngine(grid, profile, V, sgrid=sgrid,
                                        n_points=n_points, **kwargs)
        self.triples = triples

    # -- convention pinning -------------------------------------------------
    @classmethod
    def ensure_validated(cls, seed: int = 1234):
        """Cross-validate sign conventions against dense Fock on small instances."""
        if cls._conventions_ok:
            return
        rng = np.random.default_rng(seed)
        for trial in range(4):
            n = 6
            basis = np.linalg.qr(rng.normal(size=(n, n))
                                 + 1j * rng.normal(size=(n, n)))[0]
            pairs = ((basis[:, 0], basis[:, 1]), (basis[:, 2], basis[:, 3]))
            region = tuple(sorted(rng.choice(n, size=3, replace=False).tolist()))
            rotation = None
            if trial % 2 == 0:
                rotation = (basis[:, 0], basis[:, 1], np.pi / 4)
            spec = GaussianStateSpec(n=n, pairs=pairs, region=region,
                                     rotation=rotation)
            got = _spec_probability(spec)
            want = _dense_reference(spec)
            if abs(got - want) > 1e-9:
                raise ConventionValidationError(
                    f"gaussian={got!r} vs dense={want!r} on pinning instance {trial}")
        cls._conventions_ok = True

    # -- abstract instances --------------------------------------------------
    def probability_from_spec(self, spec: GaussianStateSpec) -> float:
        self.ensure_validated()
        return _spec_probability(spec)

    def state_from_spec(self, spec: GaussianStateSpec) -> GaussianState:
        """Majorana covariance of the (unrotated) spec state, for diagnostics."""
        n = spec.n
        C = np.zeros((n, n), complex)
        F = np.zeros((n, n), complex)
        for ga, gb in spec.pairs:
            ga = np.asarray(ga, complex)
            gb = np.asarray(gb, complex)
            C += 0.5 * (np.outer(np.conj(ga), ga) + np.outer(np.conj(gb), gb))
            F += 0.5 * (np.outer(gb, ga) - np.outer(ga, gb))
        for phi in spec.slater:
            phi = np.asarray(phi, complex)
            C += np.outer(np.conj(phi), phi)
        state = GaussianState.from_correlations(C, F)
        state.validate()
        return state

    # -- protocol instances ---------------------------------------------------
    def _state_triples(self, setting: MeasurementSetting):
        if setting.mode == "sequential":
            return [tuple(setting.triple)]
        if self.triples is None:
            raise ValueError("parallel mode requires the backend to know all triples")
        return [tuple(t) for t in self.triples]

    def probability(self, setting: MeasurementSetting) -> float:
        if self.engine is None:
            raise ValueError("backend was built without a grid/potential")
        self.ensure_validated()
        eng = self.engine
        alpha, beta = setting.pair
        t = setting.time

        pairs = []
        for tri in self._state_triples(setting):
            pairs.append((eng.weighted(eng.evolved(tri[alpha], t)),
                          eng.weighted(eng.evolved(tri[beta], t))))
        wa = eng.weighted(eng.initial(setting.triple[alpha]))
        wb = eng.weighted(eng.initial(setting.triple[beta]))
        mask = eng.region_mask([setting.triple[alpha], setting.triple[beta]])
        region = tuple(np.nonzero(mask)[0].tolist())
        spec = GaussianStateSpec(n=mask.size, pairs=tuple(pairs), region=region,
                                 rotation=(wa, wb, np.pi / 4))
        return _spec_probability(spec)


def gaussian_probability(setting_or_spec, grid=None, profile=None, V=None,
                         sgrid=None, triples=None, n_points=None) -> float:
    """Convenience dispatcher for protocol settings or abstract specs."""
    if isinstance(setting_or_spec, GaussianStateSpec):
        return GaussianBackend().probability_from_spec(setting_or_spec)
    backend = GaussianBackend(grid, profile, V, sgrid=sgrid, triples=triples,
                              n_points=n_points)
    return backend.probability(setting_or_spec)
