"""Dense fermionic Fock space on a small orthonormal mode set.

Jordan-Wigner matrices on 2^N dimensions with exact canonical
anticommutation relations; the exact oracle backing the analytic and
Gaussian probability formulas. Mode budget 14 keeps the space at 16384
dimensions, fast enough for CI.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

__all__ = ["DenseFockSpace", "MAX_MODES"]

MAX_MODES = 14

_SZ = sp.csr_matrix(np.diag([1.0, -1.0]))
_LOWER = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |0><1|
_ID2 = sp.identity(2, format="csr")


class DenseFockSpace:
    """2^N-dimensional Fock space over N orthonormal modes.

    Basis states are occupation bitstrings; bit k of the basis index is the
    occupation of mode k. Vacuum is index 0.
    """

    def __init__(self, n_modes: int):
        if not 1 <= n_modes <= MAX_MODES:
            raise ValueError(f"mode count must be in [1, {MAX_MODES}], got {n_modes}")
        self.n_modes = n_modes
        self.dim = 2 ** n_modes
        self._ann = [self._build_annihilator(k) for k in range(n_modes)]
        occ = np.arange(self.dim)[:, None] >> np.arange(n_modes)[None, :]
        self._occupations = (occ & 1).astype(bool)  # (dim, n_modes)

    def _build_annihilator(self, k: int) -> sp.csr_matrix:
        # Jordan-Wigner string over modes 0..k-1: mode 0 is the fastest bit,
        # so kron order is (mode n-1) x ... x (mode 0)
        mats = []
        for m in range(self.n_modes - 1, -1, -1):
            if m > k:
                mats.append(_ID2)
            elif m == k:
                mats.append(_LOWER)
            else:
                mats.append(_SZ)
        out = mats[0]
        for mat in mats[1:]:
            out = sp.kron(out, mat, format="csr")
        return out

    # -- operators ---------------------------------------------------------
    def ann_mode(self, k: int) -> sp.csr_matrix:
        return self._ann[k]

    def cre_mode(self, k: int) -> sp.csr_matrix:
        return self._ann[k].getH().tocsr()

    def ann(self, coeffs) -> sp.csr_matrix:
        """``a(f)`` for ``f = sum_m coeffs[m] g_m`` (antilinear in f)."""
        coeffs = np.asarray(coeffs, complex)
        out = None
        for m, c in enumerate(coeffs):
            if c == 0:
                continue
            term = np.conj(c) * self._ann[m]
            out = term if out is None else out + term
        if out is None:
            out = sp.csr_matrix((self.dim, self.dim))
        return out

    def cre(self, coeffs) -> sp.csr_matrix:
        return self.ann(coeffs).getH().tocsr()

    def dgamma(self, h: np.ndarray) -> sp.csr_matrix:
        """Second quantization ``sum_ij h_ij adag_i a_j`` of a mode-space matrix."""
        h = np.asarray(h, complex)
        if h.shape != (self.n_modes, self.n_modes):
            raise ValueError("one-body matrix has wrong shape")
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for i in range(self.n_modes):
            for j in range(self.n_modes):
                if h[i, j] != 0:
                    out = out + h[i, j] * (self.cre_mode(i) @ self.ann_mode(j))
        return out

    # -- states ------------------------------------------------------------
    def vacuum(self) -> np.ndarray:
        psi = np.zeros(self.dim, complex)
        psi[0] = 1.0
        return psi

    def pair_state(self, pairs) -> np.ndarray:
        """``2^(-P/2) prod (1 + adag(c_a) adag(c_b)) |vac>`` over coefficient pairs."""
        psi = self.vacuum()
        for ca, cb in pairs:
            op = self.cre(ca) @ self.cre(cb)
            psi = psi + op @ psi
        return psi / 2 ** (len(pairs) / 2.0)

    def apply_pair_rotation(self, psi: np.ndarray, ca, cb, angle: float) -> np.ndarray:
        """Apply ``exp(i angle (adag(ca) adag(cb) + h.c.))`` to a state."""
        adag_pair = self.cre(ca) @ self.cre(cb)
        gen = adag_pair + adag_pair.getH()
        return expm_multiply(1j * angle * gen.tocsc(), psi)

    # -- projectors / diagnostics ------------------------------------------
    def vacuum_projector_mask(self, modes) -> np.ndarray:
        """Boolean mask of basis states with zero occupation on ``modes``."""
        modes = list(modes)
        if not modes:
            return np.ones(self.dim, bool)
        return ~self._occupations[:, modes].any(axis=1)

    def project_regional_vacuum(self, psi: np.ndarray, modes) -> np.ndarray:
        out = psi.copy()
        out[~self.vacuum_projector_mask(modes)] = 0.0
        return out

    def number_expectation(self, psi: np.ndarray, mode: int) -> float:
        return float((np.abs(psi) ** 2 * self._occupations[:, mode]).sum())

    def car_defect(self) -> float:
        """Largest violation of the canonical anticommutation relations."""
        worst = 0.0
        eye = sp.identity(self.dim, format="csr")
        for i in range(self.n_modes):
            for k in range(self.n_modes):
                ai, ak = self._ann[i], self._ann[k]
                worst = max(worst, _spmax(ai @ ak + ak @ ai))
                anti = ai @ ak.getH() + ak.getH() @ ai
                if i == k:
                    anti = anti - eye
                worst = max(worst, _spmax(anti))
        return worst


def _spmax(m) -> float:
    m = sp.csr_matrix(m)
    return 0.0 if m.nnz == 0 else float(np.abs(m.data).max())
