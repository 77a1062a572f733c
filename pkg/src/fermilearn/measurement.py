"""Measurement protocol: sample planning, shot simulation, local-average estimation.

The protocol measures, for each triple and each pair (a, b) of its boxes,
a Bernoulli probability p^{ab}(t). The finite difference
``D^{ab} = (p_hat - 1/2) / t`` feeds the sign combination

    omega_a = 1/(2 kappa) * sum_{(b,g)} sigma_a(b,g) D^{bg} - T_kin,

with sigma_a = +1 when a belongs to the pair and -1 otherwise. Shot noise
is planned by Hoeffding's inequality, and every random draw comes from a
counter-based stream keyed by (seed, triple, pair), so datasets are
bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends.base import PAIRS, MeasurementSetting
from .grid import BoxGrid, Orbital, Profile, TripleSet, kinetic_energy, local_average

__all__ = [
    "PAIRS", "SamplingPlan", "OmegaDataset", "OmegaEntry", "OracleBackend",
    "plan_samples", "choose_time", "estimate_probability", "run_protocol",
    "sigma_sign", "omega_from_differences", "GAMMA_SEQUENTIAL",
]

GAMMA_SEQUENTIAL = 4
# beyond this many shots per setting, draw the binomial count instead of
# per-shot Bernoullis (same law, same stream, still deterministic)
PER_SHOT_LIMIT = 1_000_000


def gamma_parallel(d: int) -> int:
    """Parallel-mode time exponent ``3 d + 10``."""
    return 3 * d + 10


def plan_samples(epsilon_p: float, delta: float, n_triples: int) -> int:
    """Hoeffding shot count ``ceil(ln(6 |J| / delta) / (2 epsilon_p^2))``."""
    if not 0 < epsilon_p < 1:
        raise ValueError(f"probability precision must be in (0, 1), got {epsilon_p}")
    if not 0 < delta < 1:
        raise ValueError(f"failure probability must be in (0, 1), got {delta}")
    if n_triples < 1:
        raise ValueError("need at least one triple")
    return math.ceil(math.log(6.0 * n_triples / delta) / (2.0 * epsilon_p ** 2))


def choose_time(epsilon: float, grid: BoxGrid, mode: str, c_t: float = 1.0) -> float:
    """Evolution time ``t = c_t * ell^g * epsilon``.

    g = 4 in sequential mode (one-box second-derivative bound),
    g = 3d + 10 in parallel mode.
    """
    if epsilon <= 0:
        raise ValueError("precision must be positive")
    if mode == "sequential":
        g = GAMMA_SEQUENTIAL
    elif mode == "parallel":
        g = gamma_parallel(grid.d)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return c_t * grid.ell ** g * epsilon


@dataclass(frozen=True)
class SamplingPlan:
    """Resolved plan: target precision, time, shots, and their provenance."""

    epsilon: float
    delta: float
    t: float
    T: int
    triples_measured: int
    gamma_exponent: int
    epsilon_p: float
    mode: str = "sequential"
    c_t: float = 1.0
    noiseless: bool = False

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("evolution time must be positive")
        if not self.noiseless:
            floor = plan_samples(self.epsilon_p, self.delta, self.triples_measured)
            if self.T < floor:
                raise ValueError(f"T={self.T} below the Hoeffding floor {floor}")

    @classmethod
    def derive(cls, epsilon: float, delta: float, grid: BoxGrid, n_triples: int,
               mode: str = "sequential", c_t: float = 1.0, kappa: float = 0.5,
               noiseless: bool = False) -> "SamplingPlan":
        """Plan from the omega-level target: t from the ell-power law,
        probability precision ``epsilon_p = kappa t epsilon / 3``, T from Hoeffding."""
        t = choose_time(epsilon, grid, mode, c_t=c_t)
        eps_p = kappa * t * epsilon / 3.0
        T = 1 if noiseless else plan_samples(eps_p, delta, n_triples)
        g = GAMMA_SEQUENTIAL if mode == "sequential" else gamma_parallel(grid.d)
        return cls(epsilon=epsilon, delta=delta, t=t, T=T,
                   triples_measured=n_triples, gamma_exponent=g,
                   epsilon_p=eps_p, mode=mode, c_t=c_t, noiseless=noiseless)


def estimate_probability(shots) -> tuple:
    """Arithmetic mean and binomial standard error of 0/1 outcomes."""
    shots = np.asarray(shots)
    if shots.size == 0:
        raise ValueError("cannot estimate from zero shots")
    p_hat = float(shots.mean())
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / shots.size)
    return p_hat, stderr


def sigma_sign(alpha: int, pair) -> int:
    return 1 if alpha in pair else -1


def omega_from_differences(diffs: dict, kappa: float, tkin: float) -> list:
    """Invert the pair differences into the three local averages.

    ``diffs`` maps each pair to D^{pair}; the sign combination is exactly
    inverse to D = kappa (omega_a + omega_b + 2 T_kin).
    """
    out = []
    for alpha in range(3):
        acc = sum(sigma_sign(alpha, pair) * diffs[pair] for pair in PAIRS)
        out.append(acc / (2.0 * kappa) - tkin)
    return out


@dataclass(frozen=True)
class OmegaEntry:
    omega_hat: float
    stderr: float
    T: int
    t: float
    mode: str


@dataclass
class OmegaDataset:
    """Estimated local averages with sampling metadata.

    The interchange format between the simulator and the solvers; persists
    as a CSV (one row per box, canonical enumeration order) plus a JSON
    sidecar holding the grid, seed, backend id and kappa.
    """

    grid: BoxGrid
    entries: dict = field(default_factory=dict)   # BoxIndex -> OmegaEntry
    meta: dict = field(default_factory=dict)

    def omega(self, j) -> float:
        return self.entries[tuple(j)].omega_hat

    def stderr(self, j) -> float:
        return self.entries[tuple(j)].stderr

    def __contains__(self, j):
        return tuple(j) in self.entries

    def __len__(self):
        return len(self.entries)

    def as_grid_array(self) -> np.ndarray:
        """Dense (m,)*d array of omega_hat, NaN where unmeasured."""
        arr = np.full((self.grid.m,) * self.grid.d, np.nan)
        for j, e in self.entries.items():
            arr[j] = e.omega_hat
        return arr

    def stderr_grid_array(self) -> np.ndarray:
        arr = np.full((self.grid.m,) * self.grid.d, np.nan)
        for j, e in self.entries.items():
            arr[j] = e.stderr
        return arr

    # -- persistence ---------------------------------------------------------
    def to_csv(self, path, sidecar_path=None):
        from .grid import box_index_list

        path = Path(path)
        d = self.grid.d
        header = ",".join([f"j{i}" for i in range(d)]
                          + ["omega_hat", "stderr", "T", "t", "mode"])
        lines = [header]
        for j in box_index_list(self.grid):
            if j not in self.entries:
                continue
            e = self.entries[j]
            cells = [str(c) for c in j]
            cells += [repr(e.omega_hat), repr(e.stderr), str(e.T), repr(e.t), e.mode]
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n")
        if sidecar_path is None:
            sidecar_path = path.with_suffix(".meta.json")
        sidecar = dict(self.meta)
        sidecar["grid"] = {"L": self.grid.L, "m": self.grid.m, "d": self.grid.d}
        Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path, sidecar_path=None) -> "OmegaDataset":
        path = Path(path)
        if sidecar_path is None:
            sidecar_path = path.with_suffix(".meta.json")
        meta = json.loads(Path(sidecar_path).read_text())
        g = meta.pop("grid")
        grid = BoxGrid(L=g["L"], m=g["m"], d=g["d"])
        entries = {}
        lines = path.read_text().strip().splitlines()
        d = grid.d
        for line in lines[1:]:
            cells = line.split(",")
            j = tuple(int(c) for c in cells[:d])
            entries[j] = OmegaEntry(
                omega_hat=float(cells[d]), stderr=float(cells[d + 1]),
                T=int(cells[d + 2]), t=float(cells[d + 3]), mode=cells[d + 4])
        return cls(grid=grid, entries=entries, meta=meta)


class OracleBackend:
    """Noiseless oracle: local averages by quadrature/shell, no protocol.

    Produces the forward-model datasets used by the solver acceptance
    paths; reported as backend id "exact".
    """

    name = "exact"

    def __init__(self, grid: BoxGrid, profile: Profile, V):
        self.grid = grid
        self.profile = profile
        self.V = V

    def omega(self, box) -> float:
        from .potentials import CenterInsideSupportError, MultiCoulomb, shell_average

        orb = Orbital(grid=self.grid, box=tuple(box), profile=self.profile)
        if isinstance(self.V, MultiCoulomb):
            try:
                return shell_average(self.V, orb.center, orb.support_radius)
            except CenterInsideSupportError:
                return local_average(self.V, orb)
        return local_average(self.V, orb)


def _pair_stream(seed: int, triple_rank: int, pair_rank: int) -> np.random.Generator:
    key = np.uint64((triple_rank << 8) | pair_rank)
    return np.random.Generator(np.random.Philox(key=np.array(
        [np.uint64(seed), key], dtype=np.uint64)))


def _draw_p_hat(rng: np.random.Generator, p: float, T: int) -> float:
    if T <= PER_SHOT_LIMIT:
        return float((rng.random(T) < p).mean())
    return float(rng.binomial(T, p)) / T


def _wrap_triples(triples: TripleSet):
    """Extra triples that cover the remainder boxes, padded with early boxes."""
    if not triples.remainder:
        return []
    pool = [b for t in triples.triples for b in t]
    pad = [b for b in pool if b not in triples.remainder]
    boxes = list(triples.remainder) + pad[: 3 - len(triples.remainder)]
    if len(boxes) < 3:
        raise ValueError("grid too small to complete a wrap triple")
    return [tuple(boxes[:3])]


def run_protocol(grid: BoxGrid, triples, backend, plan: SamplingPlan,
                 profile: Profile = None, rng_seed: int = 0,
                 kappa: float = 0.5, pairs=PAIRS) -> OmegaDataset:
    """Simulate Algorithm-style data acquisition and invert to omega_hat.

    ``backend`` supplies p^{ab}(t) per setting (or exact local averages if
    it is an :class:`OracleBackend`). Identical ``rng_seed`` gives a
    bit-identical dataset.
    """
    if profile is None:
        profile = Profile.default_bump(grid.d)

    dataset = OmegaDataset(grid=grid, meta={
        "seed": rng_seed, "kappa": kappa,
        "backend": getattr(backend, "name", type(backend).__name__),
        "mode": plan.mode,
    })

    if isinstance(backend, OracleBackend):
        from .grid import box_index_list

        for j in box_index_list(grid):
            dataset.entries[j] = OmegaEntry(
                omega_hat=backend.omega(j), stderr=0.0, T=0, t=0.0, mode="exact")
        return dataset

    if isinstance(triples, TripleSet):
        triple_list = list(triples.triples) + _wrap_triples(triples)
    else:
        triple_list = [tuple(t) for t in triples]

    tkin = kinetic_energy(Orbital(grid=grid, box=triple_list[0][0], profile=profile))

    for triple_rank, triple in enumerate(triple_list):
        diffs = {}
        variances = {}
        for pair_rank, pair in enumerate(pairs):
            setting = MeasurementSetting(triple=tuple(triple), pair=pair,
                                         time=plan.t, mode=plan.mode)
            p = backend.probability(setting)
            if plan.noiseless:
                p_hat, var = p, 0.0
            else:
                rng = _pair_stream(rng_seed, triple_rank, pair_rank)
                p_hat = _draw_p_hat(rng, p, plan.T)
                var = p_hat * (1.0 - p_hat) / plan.T
            diffs[pair] = (p_hat - 0.5) / plan.t
            variances[pair] = var / plan.t ** 2
        omegas = omega_from_differences(diffs, kappa, tkin)
        spread = math.sqrt(sum(variances.values())) / (2.0 * kappa)
        for alpha, box in enumerate(triple):
            if box in dataset.entries:
                continue  # wrap triples only fill still-missing boxes
            dataset.entries[tuple(box)] = OmegaEntry(
                omega_hat=omegas[alpha], stderr=spread, T=plan.T, t=plan.t,
                mode=plan.mode)
    return dataset
