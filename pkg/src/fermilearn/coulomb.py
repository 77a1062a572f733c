"""Single- and multi-center Coulomb reconstruction from local-average data.

Single center: the shell identity ``omega_j = lambda / ||p_j - y||`` turns
six probe boxes into a linear system in ``(lambda^2, y)`` through the row
identity

    v_ij = eta_ij lambda^2 + 2 <p_i - p_j, y>,
    v_ij = ||p_i||^2 - ||p_j||^2,   eta_ij = 1/omega_i^2 - 1/omega_j^2.

Multi center: peak detection with a shell-margin test, a diagonally
dominant charge system, then per-center iterative refinement on corrected
data (other centers' shell contributions subtracted with the current
estimates), re-running the single-center solve locally each round.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import BoxGrid, Orbital, Profile, coulomb_box_average

__all__ = [
    "ProbeSet", "SingleCoulombResult", "MultiCoulombConfig", "ChargeSystem",
    "MultiCoulombResult", "find_peak", "select_probe_points", "solve_single",
    "detect_centers", "assemble_charge_system", "refine_positions",
    "solve_multi", "DetectionError", "IllConditionedError",
    "InconsistentDataError", "NonContractionError",
]

ETA_GUARD_BASE = 7.0 / 100.0


class DetectionError(RuntimeError):
    def __init__(self, message, candidates=None, margins=None):
        super().__init__(message)
        self.candidates = candidates or []
        self.margins = margins or {}


class IllConditionedError(RuntimeError):
    pass


class InconsistentDataError(RuntimeError):
    pass


class NonContractionError(RuntimeError):
    pass


def _omega_lookup(data):
    if hasattr(data, "omega"):
        return data.omega
    return lambda j: data[tuple(j)]


def _stderr_lookup(data):
    if hasattr(data, "stderr"):
        return data.stderr
    return lambda j: 0.0


def find_peak(data):
    """Argmax of omega_hat; ties broken by lexicographically smallest index."""
    entries = getattr(data, "entries", data)
    if not entries:
        raise ValueError("empty dataset")
    get = _omega_lookup(data)
    best = None
    best_val = -np.inf
    for j in sorted(entries):
        v = get(j)
        if np.isnan(v):
            continue
        if v > best_val:
            best, best_val = tuple(j), v
    if best is None:
        raise ValueError("dataset holds no finite values")
    return best


@dataclass(frozen=True)
class ProbeSet:
    """Probe boxes plus the four row pairs feeding the linear solve."""

    grid: BoxGrid
    peak: tuple
    boxes: tuple
    row_pairs: tuple   # four (box_i, box_j); first two must share a direction

    def __post_init__(self):
        for b in self.boxes:
            self.grid.require_index(b)


def select_probe_points(peak, grid: BoxGrid, force: bool = False) -> ProbeSet:
    """The 8^3 construction: far corner plus an axis ladder from the peak.

    j0 is the farthest box from the peak (a grid corner); the signed axis
    directions e_i point from the peak toward j0. Probes step inward from
    j0 along axes 1 and 2 and away from the peak along axis 3, so all six
    boxes stay on the grid for every peak position.
    """
    if grid.d != 3:
        raise ValueError("probe construction is defined on three-dimensional grids")
    if grid.m != 8 and not force:
        raise ValueError("construction is specified for m=8; pass force=True to override")
    peak = tuple(int(c) for c in peak)
    grid.require_index(peak)
    m = grid.m
    j0 = tuple(m - 1 if c <= (m - 1) / 2 else 0 for c in peak)
    sign = tuple(1 if j0[i] > peak[i] else -1 for i in range(3))

    def step(base, axis, k):
        out = list(base)
        out[axis] += k * sign[axis]
        return tuple(out)

    boxes = (
        j0,
        step(j0, 0, -1),          # j0 - e1
        step(j0, 1, -1),          # j0 - e2
        step(peak, 2, 2),         # peak + 2 e3
        step(peak, 2, 3),
        step(peak, 2, 4),
    )
    for b in boxes:
        if not grid.contains_index(b):
            raise AssertionError(f"probe {b} escaped the grid; peak {peak}")
    row_pairs = (
        (boxes[4], boxes[5]),     # eta pair along e3
        (boxes[3], boxes[4]),     # second eta pair along e3
        (boxes[2], boxes[0]),     # direction e2
        (boxes[1], boxes[0]),     # direction e1
    )
    return ProbeSet(grid=grid, peak=peak, boxes=boxes, row_pairs=row_pairs)


@dataclass
class SingleCoulombResult:
    charge_hat: float
    position_hat: tuple
    peak_box: tuple
    probe_points: tuple
    system_condition: dict

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


def solve_single(data, probes: ProbeSet, bounds, guard_scale: float = 0.1) -> SingleCoulombResult:
    """Invert the four probe rows into charge and position estimates.

    ``bounds = (Lambda_lo, Lambda_hi)`` clamp the charge (flagged when
    active). Raises :class:`IllConditionedError` when the eta gap of the
    two parallel rows falls under the guard, :class:`InconsistentDataError`
    when the data give a negative lambda^2.
    """
    grid = probes.grid
    get = _omega_lookup(data)
    omegas = {}
    for b in probes.boxes:
        w = get(b)
        if not np.isfinite(w) or w <= 0:
            raise InconsistentDataError(f"nonpositive local average at probe {b}")
        omegas[b] = w

    rows = []
    rhs = []
    for bi, bj in probes.row_pairs:
        pi, pj = grid.midpoint(bi), grid.midpoint(bj)
        eta = 1.0 / omegas[bi] ** 2 - 1.0 / omegas[bj] ** 2
        rows.append(np.concatenate([[eta], 2.0 * (pi - pj)]))
        rhs.append(float(pi @ pi - pj @ pj))
    a_mat = np.array(rows)
    rhs = np.array(rhs)

    eta_gap = abs(a_mat[0, 0] - a_mat[1, 0])
    guard = guard_scale * ETA_GUARD_BASE * grid.ell / max(grid.L - grid.ell, grid.ell)
    if eta_gap < guard:
        raise IllConditionedError(
            f"eta gap {eta_gap:.3e} below guard {guard:.3e}")

    solution = np.linalg.solve(a_mat, rhs)
    lam_sq, y = solution[0], solution[1:]
    if lam_sq <= 0:
        raise InconsistentDataError(f"negative lambda^2 = {lam_sq:.3e}")
    lam = math.sqrt(lam_sq)
    clamped = False
    if bounds is not None:
        lo, hi = bounds
        if lam < lo or lam > hi:
            clamped = True
            lam = min(max(lam, lo), hi)
    return SingleCoulombResult(
        charge_hat=float(lam),
        position_hat=tuple(float(c) for c in y),
        peak_box=probes.peak,
        probe_points=probes.boxes,
        system_condition={
            "cond": float(np.linalg.cond(a_mat)),
            "eta_gap": float(eta_gap),
            "eta_guard": float(guard),
            "clamped": clamped,
        },
    )


# ---------------------------------------------------------------------------
# multi-Coulomb
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiCoulombConfig:
    """Assumptions of the multi-center pipeline (charge box, separation, margin)."""

    K: int
    Lambda_lo: float
    Lambda_hi: float
    y_star: float
    c_threshold: float = None
    s1: int = None

    def shell_radius(self, grid: BoxGrid) -> int:
        if self.s1 is not None:
            return self.s1
        return max(1, math.ceil(grid.ell ** (-1.0 / 3.0)))

    def margin_threshold(self, grid: BoxGrid) -> float:
        if self.c_threshold is not None:
            return self.c_threshold
        cbrt = grid.ell ** (1.0 / 3.0)
        return min(2.0 * self.K * self.Lambda_hi / self.y_star,
                   self.Lambda_lo / (2.0 * cbrt))

    def grid_validity(self, grid: BoxGrid) -> dict:
        """Displayed validity bounds (theorem and appendix forms); warn-only."""
        theorem = math.ceil(max(64.0 / grid.L,
                                (16.0 * self.y_star / 3.0) ** 3,
                                125.0 / self.y_star ** 3))
        c = self.margin_threshold(grid)
        prop_terms = [64.0 / grid.L, 125.0 / self.y_star ** 3,
                      (32.0 * self.K * self.Lambda_hi / (3.0 * c)) ** 3]
        excess = 2.0 * self.K * self.Lambda_hi / self.y_star - c
        if excess > 0:
            prop_terms.append((grid.L * self.Lambda_lo) ** (-3) * excess ** 3)
        prop = math.ceil(max(prop_terms))
        return {
            "m": grid.m,
            "theorem_m_min": theorem,
            "appendix_m_min": prop,
            "stricter_m_min": max(theorem, prop),
            "satisfied": grid.m >= max(theorem, prop),
        }


def _shell_offsets(s1: int, d: int):
    rng = range(-s1, s1 + 1)
    out = []
    if d == 3:
        for a in rng:
            for b in rng:
                for c in rng:
                    if max(abs(a), abs(b), abs(c)) == s1:
                        out.append((a, b, c))
    else:
        raise ValueError("center detection is defined on three-dimensional grids")
    return out


def detect_centers(data, cfg: MultiCoulombConfig, grid: BoxGrid = None) -> list:
    """Boxes whose omega beats every shell neighbor at distance s1 by the margin c.

    Candidates are deduplicated at radius ``y_star - 2 s1 ell`` keeping the
    larger omega; exactly K survivors are required.
    """
    if grid is None:
        grid = data.grid
    arr = data.as_grid_array() if hasattr(data, "as_grid_array") else np.asarray(data)
    try:
        err_arr = data.stderr_grid_array()
    except AttributeError:
        err_arr = np.zeros_like(arr)
    err_arr = np.where(np.isnan(err_arr), 0.0, err_arr)
    s1 = cfg.shell_radius(grid)
    if s1 >= grid.m:
        raise DetectionError(f"shell radius {s1} does not fit the grid")
    c = cfg.margin_threshold(grid)

    m = grid.m
    shell_max = np.full(arr.shape, -np.inf)
    shell_err = np.zeros(arr.shape)
    for off in _shell_offsets(s1, grid.d):
        src = [slice(max(0, -o), min(m, m - o)) for o in off]
        dst = [slice(max(0, o), min(m, m + o)) for o in off]
        shifted = np.full(arr.shape, np.nan)
        shifted[tuple(dst)] = arr[tuple(src)]
        take = np.nan_to_num(shifted, nan=-np.inf) > shell_max
        shell_max = np.where(take, np.nan_to_num(shifted, nan=-np.inf), shell_max)
        shifted_err = np.zeros(arr.shape)
        shifted_err[tuple(dst)] = err_arr[tuple(src)]
        shell_err = np.where(take, shifted_err, shell_err)

    margin = arr - shell_max
    threshold = c + 3.0 * (err_arr + shell_err)
    cand_mask = np.isfinite(margin) & (margin >= threshold)
    candidates = [tuple(int(c_) for c_ in idx) for idx in np.argwhere(cand_mask)]
    candidates.sort(key=lambda j: (-arr[j], j))

    dedup_radius = cfg.y_star - 2.0 * s1 * grid.ell
    accepted = []
    for j in candidates:
        pj = grid.midpoint(j)
        if all(np.linalg.norm(pj - grid.midpoint(k)) >= dedup_radius for k in accepted):
            accepted.append(j)

    if len(accepted) != cfg.K:
        margins = {j: float(margin[j]) for j in candidates[:max(10, cfg.K * 3)]}
        raise DetectionError(
            f"found {len(accepted)} centers, expected {cfg.K}",
            candidates=candidates, margins=margins)
    return accepted


@dataclass
class ChargeSystem:
    matrix: np.ndarray
    center_boxes: tuple
    positions: np.ndarray
    row_gaps: np.ndarray
    levy_bound: float
    paper_bound: float
    inverse_norm_inf: float

    def diagnostics(self) -> dict:
        return {
            "row_gaps": self.row_gaps.tolist(),
            "levy_bound": self.levy_bound,
            "paper_bound": self.paper_bound,
            "inverse_norm_inf": self.inverse_norm_inf,
            "diagonally_dominant": bool(np.all(self.row_gaps > 0)),
        }


def assemble_charge_system(centers, grid: BoxGrid, profile: Profile,
                           cfg: MultiCoulombConfig = None,
                           positions=None) -> ChargeSystem:
    """Charge matrix ``M[k, k'] = <|f_{j_k}|^2, 1/||x - y_k'||>``.

    Shell closed form whenever the estimated center sits outside the probe
    orbital's support ball; exact radial quadrature otherwise (in
    particular on the diagonal). Raises when strict diagonal dominance
    fails.
    """
    centers = [tuple(j) for j in centers]
    K = len(centers)
    if positions is None:
        positions = np.array([grid.midpoint(j) for j in centers])
    else:
        positions = np.asarray(positions, float)
    mat = np.zeros((K, K))
    for k, jk in enumerate(centers):
        orb = Orbital(grid=grid, box=jk, profile=profile)
        p = orb.center
        for kp in range(K):
            dist = float(np.linalg.norm(p - positions[kp]))
            mat[k, kp] = coulomb_box_average(orb, dist)
    off = np.abs(mat).sum(axis=1) - np.abs(np.diag(mat))
    gaps = np.abs(np.diag(mat)) - off
    if np.any(gaps <= 0):
        raise IllConditionedError(
            f"charge matrix is not strictly diagonally dominant (gaps {gaps})")
    paper_bound = (2.0 * (K - 1) / (5.0 * cfg.y_star)) if (cfg and K > 1) else np.inf
    return ChargeSystem(
        matrix=mat,
        center_boxes=tuple(centers),
        positions=positions,
        row_gaps=gaps,
        levy_bound=float(1.0 / gaps.min()),
        paper_bound=float(paper_bound),
        inverse_norm_inf=float(np.linalg.norm(np.linalg.inv(mat), ord=np.inf)),
    )


def _solve_charges(data, system: ChargeSystem) -> np.ndarray:
    get = _omega_lookup(data)
    omega = np.array([get(j) for j in system.center_boxes])
    return np.linalg.solve(system.matrix, omega)


def _shell_field(point, positions, charges, skip=None) -> float:
    total = 0.0
    for k, (pos, lam) in enumerate(zip(positions, charges)):
        if k == skip:
            continue
        total += lam / np.linalg.norm(point - pos)
    return total


def _local_probes(center_box, grid: BoxGrid, offsets=(2, 3, 4)) -> ProbeSet:
    """Probe ladder around one center: per-axis steps toward the roomy side."""
    b = np.asarray(center_box, int)
    m = grid.m
    sign = np.where(m - 1 - b >= b, 1, -1)
    need = max(offsets)
    for ax in range(3):
        room = (m - 1 - b[ax]) if sign[ax] > 0 else b[ax]
        if room < need and ax == 2:
            raise IllConditionedError("no room for the probe ladder along axis 3")

    def step(axis, k):
        out = b.copy()
        out[axis] += k * sign[axis]
        return tuple(int(x) for x in out)

    k1, k2, k3 = offsets
    boxes = (step(2, k1), step(2, k2), step(2, k3),
             step(1, k1), step(1, k2), step(0, k1), step(0, k2))
    row_pairs = (
        (boxes[1], boxes[2]),   # eta pair along axis 3
        (boxes[0], boxes[1]),   # second eta pair along axis 3
        (boxes[3], boxes[4]),   # axis 2
        (boxes[5], boxes[6]),   # axis 1
    )
    for bb in boxes:
        grid.require_index(bb)
    return ProbeSet(grid=grid, peak=tuple(int(x) for x in b), boxes=boxes,
                    row_pairs=row_pairs)


def _corrected_data(data, probes: ProbeSet, positions, charges, skip: int) -> dict:
    """Subtract the other centers' shell contributions at the probe boxes."""
    get = _omega_lookup(data)
    out = {}
    for bx in probes.boxes:
        p = probes.grid.midpoint(bx)
        out[bx] = get(bx) - _shell_field(p, positions, charges, skip=skip)
    return out


def _bootstrap_positions(data, center_box, grid: BoxGrid, positions, charges,
                         skip: int, radius=(2, 4)):
    """Regress 1/omega_corr^2 over an index annulus to seat (lambda, y)."""
    get = _omega_lookup(data)
    b = np.asarray(center_box, int)
    lo, hi = radius
    feats, targets = [], []
    for idx in np.ndindex(*(2 * hi + 1,) * 3):
        off = np.asarray(idx) - hi
        cheb = np.max(np.abs(off))
        if not lo <= cheb <= hi:
            continue
        j = b + off
        if np.any(j < 0) or np.any(j >= grid.m):
            continue
        j = tuple(int(x) for x in j)
        p = grid.midpoint(j)
        w = get(j) - _shell_field(p, positions, charges, skip=skip)
        if not np.isfinite(w) or w <= 0:
            continue
        feats.append(np.concatenate([[p @ p], p, [1.0]]))
        targets.append(1.0 / w ** 2)
    if len(targets) < 8:
        return None
    coef, *_ = np.linalg.lstsq(np.array(feats), np.array(targets), rcond=None)
    if coef[0] <= 0:
        return None
    lam_sq = 1.0 / coef[0]
    y = -0.5 * coef[1:4] * lam_sq
    return math.sqrt(lam_sq), y


def refine_positions(data, centers, charges, cfg: MultiCoulombConfig,
                     epsilon: float, grid: BoxGrid, profile: Profile,
                     rounds: int = None, probe_offsets=(2, 3, 4),
                     bootstrap_sweeps: int = 2, bounds=None,
                     collect_trace: bool = True):
    """Iteratively sharpen per-center estimates on corrected local data.

    Each round re-solves every center with :func:`solve_single` on data
    from which the other centers' current shell contributions have been
    subtracted (Gauss-Seidel updates). Aborts when the update steps grow
    two rounds in a row.
    """
    centers = [tuple(j) for j in centers]
    K = len(centers)
    positions = np.array([grid.midpoint(j) for j in centers])
    charges = np.array(charges, float)
    if bounds is None:
        bounds = (cfg.Lambda_lo, cfg.Lambda_hi)
    cbrt = grid.ell ** (1.0 / 3.0)
    if rounds is None:
        rounds = max(1, math.ceil(math.log(max(cbrt / epsilon, 3.0)) / math.log(3.0)))

    for _ in range(bootstrap_sweeps):
        for k in range(K):
            seat = _bootstrap_positions(data, centers[k], grid, positions,
                                        charges, skip=k)
            if seat is not None:
                charges[k], positions[k] = seat[0], seat[1]

    trace = []
    prev_step = None
    grew = 0
    for round_idx in range(rounds):
        steps = []
        for k in range(K):
            box = tuple(np.clip(np.floor(positions[k] / grid.ell).astype(int),
                                0, grid.m - 1))
            probes = _local_probes(box, grid, offsets=probe_offsets)
            corrected = _corrected_data(data, probes, positions, charges, skip=k)
            result = solve_single(corrected, probes, bounds=bounds)
            new_pos = np.asarray(result.position_hat)
            steps.append(float(np.linalg.norm(new_pos - positions[k])))
            positions[k] = new_pos
            charges[k] = result.charge_hat
        max_step = max(steps)
        if collect_trace:
            trace.append({"round": round_idx, "max_step": max_step,
                          "steps": steps,
                          "positions": positions.tolist(),
                          "charges": charges.tolist()})
        if prev_step is not None and max_step > prev_step:
            grew += 1
            if grew >= 2:
                raise NonContractionError(
                    f"update steps grew twice in a row (last {max_step:.3e})")
        else:
            grew = 0
        prev_step = max_step
        if max_step < 0.1 * epsilon:
            break
    return [(float(l), tuple(map(float, y))) for l, y in zip(charges, positions)], trace


@dataclass
class MultiCoulombResult:
    center_boxes: tuple
    charges: tuple
    positions: tuple
    charge_diagnostics: dict
    grid_validity: dict
    trace: list = field(default_factory=list)

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


def solve_multi(data, cfg: MultiCoulombConfig, grid: BoxGrid = None,
                profile: Profile = None, epsilon: float = 1e-3,
                **refine_kwargs) -> MultiCoulombResult:
    """Full pipeline: detect, charge solve, iterative position refinement."""
    if grid is None:
        grid = data.grid
    if profile is None:
        profile = Profile.default_bump(grid.d)
    validity = cfg.grid_validity(grid)
    if not validity["satisfied"]:
        import warnings
        warnings.warn(
            f"grid m={grid.m} below the displayed validity bound "
            f"{validity['stricter_m_min']} (desk-scale run)", UserWarning)
    centers = detect_centers(data, cfg, grid)
    system = assemble_charge_system(centers, grid, profile, cfg)
    charges = _solve_charges(data, system)
    estimates, trace = refine_positions(data, centers, charges, cfg, epsilon,
                                        grid, profile, **refine_kwargs)
    return MultiCoulombResult(
        center_boxes=tuple(centers),
        charges=tuple(e[0] for e in estimates),
        positions=tuple(e[1] for e in estimates),
        charge_diagnostics=system.diagnostics(),
        grid_validity=validity,
        trace=trace,
    )
