"""Linear-basis potential learning: overlap assembly, pseudoinverse solve,
conditioning diagnostics, step-function reconstruction.

The data vector of local averages obeys ``omega = M lambda + O(eps_V)``
with ``M[j, i] = <f_j, e_i f_j>``; the coefficients come back through the
Moore-Penrose pseudoinverse, and the row-sum norm of ``M^+`` turns the
measurement precision into a max-coefficient guarantee.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import BoxGrid, Orbital, Profile, box_index_list
from .potentials import StepPotential
from .quadrature import box_integrate

__all__ = [
    "StepBasis", "TrigBasis", "CustomBasis", "OverlapMatrix",
    "ReconstructionReport", "assemble_overlap", "pseudo_solve",
    "diag_dominance_bound", "vandermonde_analysis", "step_reconstruct",
    "trig_diagonal_factor", "trig_vandermonde",
]

SVD_CUTOFF = 1e-12


@dataclass(frozen=True)
class StepBasis:
    """Indicator functions of the grid boxes."""

    grid: BoxGrid

    @property
    def size(self) -> int:
        return self.grid.n_boxes


@dataclass(frozen=True)
class TrigBasis:
    """``e_i(x) = exp(2 pi i k_i . x)`` for distinct frequencies ``k_i``."""

    frequencies: tuple   # K x d

    def __post_init__(self):
        freqs = np.atleast_2d(np.asarray(self.frequencies, float))
        object.__setattr__(self, "frequencies", tuple(map(tuple, freqs)))
        if len({f for f in self.frequencies}) != len(self.frequencies):
            raise ValueError("trig frequencies must be distinct")

    @property
    def size(self) -> int:
        return len(self.frequencies)

    def separation(self) -> float:
        """Minimal pairwise torus separation ``q`` in the max norm."""
        freqs = np.asarray(self.frequencies, float)
        k_count = len(freqs)
        if k_count == 1:
            return math.inf
        best = math.inf
        for i in range(k_count):
            for j in range(i + 1, k_count):
                diff = freqs[i] - freqs[j]
                wrapped = diff - np.round(diff)
                best = min(best, float(np.max(np.abs(wrapped))))
        return best


@dataclass(frozen=True)
class CustomBasis:
    """Explicit evaluable functions, declared linearly independent."""

    functions: tuple
    eps_v: float = 0.0

    @property
    def size(self) -> int:
        return len(self.functions)


@dataclass
class OverlapMatrix:
    entries: np.ndarray       # (m^d, K), complex for trig bases
    basis: object
    grid: BoxGrid
    box_order: list = field(repr=False, default=None)

    def __post_init__(self):
        if self.box_order is None:
            self.box_order = box_index_list(self.grid)

    def to_csv(self, path):
        arr = self.entries
        lines = []
        for row in arr:
            lines.append(",".join(repr(complex(v)) if np.iscomplexobj(arr)
                                  else repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


def _basis_functions(basis, grid):
    if isinstance(basis, TrigBasis):
        freqs = np.asarray(basis.frequencies, float)

        def make(i):
            return lambda pts: np.exp(2j * np.pi * (np.asarray(pts) @ freqs[i]))

        return [make(i) for i in range(basis.size)]
    if isinstance(basis, CustomBasis):
        return list(basis.functions)
    raise TypeError(f"no explicit functions for basis {type(basis).__name__}")


def assemble_overlap(basis, grid: BoxGrid, profile: Profile,
                     rel_tol: float = 1e-8) -> OverlapMatrix:
    """Overlap matrix ``M[j, i] = <f_j, e_i f_j>`` in canonical box order.

    The step basis is exactly the identity (each orbital is supported
    inside its own box); trig and custom bases go through quadrature.
    """
    boxes = box_index_list(grid)
    if isinstance(basis, StepBasis):
        if basis.grid != grid:
            raise ValueError("step basis must live on the data grid")
        return OverlapMatrix(entries=np.eye(grid.n_boxes), basis=basis, grid=grid,
                             box_order=boxes)

    fns = _basis_functions(basis, grid)
    complex_basis = isinstance(basis, TrigBasis)
    out = np.zeros((len(boxes), len(fns)),
                   dtype=complex if complex_basis else float)
    for r, j in enumerate(boxes):
        orb = Orbital(grid=grid, box=j, profile=profile)
        lows = grid.box_low(j)
        highs = lows + grid.ell
        for i, e_fn in enumerate(fns):
            def integrand(pts):
                return orb.density_at(pts) * np.asarray(e_fn(pts))

            val, err, ok = box_integrate(integrand, lows, highs, rel_tol=rel_tol)
            if not ok:
                raise RuntimeError(
                    f"overlap entry ({j}, {i}) stalled at {err:.3e}")
            out[r, i] = val
    return OverlapMatrix(entries=out, basis=basis, grid=grid, box_order=boxes)


@dataclass
class ReconstructionReport:
    coefficients: np.ndarray
    pinv_norm2: float
    pinv_norm_inf: float
    condition: float
    residual: float
    bound: float
    epsilon: float
    eps_v: float
    rank_deficient: bool

    def to_json(self, path):
        payload = {
            "coefficients_real": np.real(self.coefficients).tolist(),
            "coefficients_imag": np.imag(self.coefficients).tolist(),
            "pinv_norm2": self.pinv_norm2,
            "pinv_norm_inf": self.pinv_norm_inf,
            "condition": self.condition,
            "residual": self.residual,
            "bound": self.bound,
            "epsilon": self.epsilon,
            "eps_v": self.eps_v,
            "rank_deficient": self.rank_deficient,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def pseudo_solve(M: OverlapMatrix, omega, epsilon: float = 0.0,
                 eps_v: float = 0.0) -> ReconstructionReport:
    """``lambda_hat = M^+ omega`` by SVD with relative cutoff 1e-12.

    Reports the spectral and row-sum pseudoinverse norms, the condition
    number (square matrices), the residual, and the a-priori error bound
    ``||M^+||_inf (epsilon + eps_V)``.
    """
    a = np.asarray(M.entries)
    omega = np.asarray(omega, dtype=a.dtype).ravel()
    if omega.size != a.shape[0]:
        raise ValueError(f"omega has length {omega.size}, expected {a.shape[0]}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    cutoff = SVD_CUTOFF * s[0] if s.size else 0.0
    keep = s > cutoff
    rank_deficient = bool(np.any(~keep))
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = (vh.conj().T * s_inv) @ u.conj().T
    lam = pinv @ omega
    kept = s[keep]
    pinv_norm2 = float(1.0 / kept.min()) if kept.size else math.inf
    pinv_norm_inf = float(np.abs(pinv).sum(axis=1).max())
    condition = float(kept.max() / kept.min()) if (a.shape[0] == a.shape[1]
                                                   and kept.size) else math.nan
    residual = float(np.linalg.norm(a @ lam - omega))
    return ReconstructionReport(
        coefficients=lam,
        pinv_norm2=pinv_norm2,
        pinv_norm_inf=pinv_norm_inf,
        condition=condition,
        residual=residual,
        bound=pinv_norm_inf * (epsilon + eps_v),
        epsilon=epsilon,
        eps_v=eps_v,
        rank_deficient=rank_deficient,
    )


def diag_dominance_bound(M) -> dict:
    """Levy-Desplanques inverse bound for strictly diagonally dominant matrices.

    Returns ``{"dominant": bool, "bound": float | None, "row_margins": [...]}``;
    the bound is ``1 / min_i (|a_ii| - sum_{j != i} |a_ij|)``.
    """
    a = np.asarray(M.entries if isinstance(M, OverlapMatrix) else M)
    if a.shape[0] != a.shape[1]:
        raise ValueError("diagonal dominance needs a square matrix")
    off = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    margins = np.abs(np.diag(a)) - off
    if np.all(margins > 0):
        return {"dominant": True, "bound": float(1.0 / margins.min()),
                "row_margins": margins.tolist()}
    return {"dominant": False, "bound": None, "row_margins": margins.tolist()}


def trig_diagonal_factor(basis: TrigBasis, grid: BoxGrid, profile: Profile,
                         rel_tol: float = 1e-10) -> np.ndarray:
    """``D_ii = int |f(u)|^2 exp(2 pi i ell k_i . u) du`` over the unit box."""
    freqs = np.asarray(basis.frequencies, float)
    out = np.zeros(len(freqs), complex)
    d = grid.d
    for i, k in enumerate(freqs):
        def fn(pts):
            return (profile.unit_eval(pts) ** 2
                    * np.exp(2j * np.pi * grid.ell * (np.asarray(pts) @ k)))

        val, _, ok = box_integrate(fn, [0.0] * d, [1.0] * d, rel_tol=rel_tol)
        if not ok:
            raise RuntimeError("diagonal factor quadrature stalled")
        out[i] = val
    return out


def trig_vandermonde(basis: TrigBasis, grid: BoxGrid) -> np.ndarray:
    """``V[j, i] = exp(2 pi i ell k_i . j)`` over the canonical box order."""
    freqs = np.asarray(basis.frequencies, float)
    boxes = np.asarray(box_index_list(grid), float)
    return np.exp(2j * np.pi * grid.ell * boxes @ freqs.T)


def vandermonde_analysis(basis: TrigBasis, grid: BoxGrid,
                         profile: Profile = None) -> dict:
    """Separation, applicability condition, and conditioning diagnostics.

    Checks ``q (m - 1) >= (8 log d + 14) / pi`` and the Neumann-series
    bound ``||D^-1|| <= exp(C ell)`` with
    ``C = 2 pi max_i |k_i| int |f|^2 ||x|| dx``.
    """
    if profile is None:
        profile = Profile.default_bump(grid.d)
    q = basis.separation()
    threshold = (8.0 * math.log(grid.d) + 14.0) / math.pi
    applicable = (q == math.inf) or (q * (grid.m - 1) >= threshold)

    vmat = trig_vandermonde(basis, grid)
    sigma = np.linalg.svd(vmat, compute_uv=False)
    diag = trig_diagonal_factor(basis, grid, profile)
    d_inv_norm = float(1.0 / np.abs(diag).min())
    freqs = np.asarray(basis.frequencies, float)
    c_const = (2.0 * np.pi * float(np.max(np.linalg.norm(freqs, axis=1)))
               * profile.abs_position_moment())
    return {
        "q": q,
        "condition_threshold": threshold,
        "bound_applicable": bool(applicable),
        "sigma_min": float(sigma.min()),
        "sigma_max": float(sigma.max()),
        "D_inv_norm": d_inv_norm,
        "D_inv_norm_bound": float(math.exp(c_const * grid.ell)),
        "neumann_constant": c_const,
    }


def step_reconstruct(data, C_V: float, epsilon: float):
    """Step-function reconstruction ``V~ = sum_j omega_hat_j chi_Bj``.

    Returns the potential and the sup-norm guarantee ``C_V sqrt(d) ell + epsilon``.
    """
    grid = data.grid
    arr = data.as_grid_array()
    if np.any(np.isnan(arr)):
        missing = int(np.isnan(arr).sum())
        raise ValueError(f"{missing} boxes have no estimate")
    bound = C_V * math.sqrt(grid.d) * grid.ell + epsilon
    return StepPotential(grid, arr), float(bound)
