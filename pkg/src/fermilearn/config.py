"""Experiment configuration: strict JSON schema, builders, hashing.

Unknown keys anywhere in the file are errors (no silently ignored typos);
every validation failure names the offending field path.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .grid import BoxGrid, Profile, partition_triples
from . import potentials as pot
from .measurement import OracleBackend, SamplingPlan
from .backends import AnalyticBackend, DenseFockBackend, GaussianBackend
from .backends.calibrate import DEFAULT_KAPPA, CalibrationReport

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_hash"]

_BACKENDS = ("exact", "analytic", "dense_fock", "gaussian")
_SOLVERS = ("single_coulomb", "multi_coulomb", "step", "basis")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the field path."""


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _check_keys(obj, path, required, optional=()):
    _require(isinstance(obj, dict), path, "must be an object")
    unknown = sorted(set(obj) - set(required) - set(optional))
    _require(not unknown, path, f"unknown keys {unknown}")
    missing = sorted(set(required) - set(obj))
    _require(not missing, path, f"missing keys {missing}")


def _number(obj, path, lo=None, hi=None, strict_lo=False):
    _require(isinstance(obj, (int, float)) and not isinstance(obj, bool),
             path, "must be a number")
    if lo is not None:
        ok = obj > lo if strict_lo else obj >= lo
        _require(ok, path, f"must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None:
        _require(obj <= hi, path, f"must be <= {hi}")
    return float(obj)


def _integer(obj, path, lo=None):
    _require(isinstance(obj, int) and not isinstance(obj, bool),
             path, "must be an integer")
    if lo is not None:
        _require(obj >= lo, path, f"must be >= {lo}")
    return obj


class ExperimentConfig:
    """Validated experiment description; builders construct live objects."""

    def __init__(self, raw: dict, source: str = "<config>"):
        self.raw = raw
        self.source = source
        self._validate()

    # -- validation ----------------------------------------------------------
    def _validate(self):
        c = self.raw
        _check_keys(c, "config", required=("domain", "potential", "protocol"),
                    optional=("profile", "solver", "output"))
        dom = c["domain"]
        _check_keys(dom, "domain", required=("L", "m", "d"))
        _number(dom["L"], "domain.L", lo=0, strict_lo=True)
        _integer(dom["m"], "domain.m", lo=1)
        _require(dom["d"] in (1, 2, 3), "domain.d", "must be 1, 2 or 3")

        if "profile" in c:
            _check_keys(c["profile"], "profile", required=("kind",))
            _require(c["profile"]["kind"] == "bump", "profile.kind",
                     "only 'bump' is available")

        self._validate_potential(c["potential"], dom)

        p = c["protocol"]
        _check_keys(p, "protocol", required=("epsilon", "delta", "backend", "seed"),
                    optional=("mode", "c_t", "kappa", "noiseless", "n_points",
                              "dt_max"))
        _number(p["epsilon"], "protocol.epsilon", lo=0, strict_lo=True)
        _number(p["delta"], "protocol.delta", lo=0, hi=1, strict_lo=True)
        _require(p["delta"] < 1, "protocol.delta", "must be < 1")
        _require(p["backend"] in _BACKENDS, "protocol.backend",
                 f"must be one of {_BACKENDS}")
        _integer(p["seed"], "protocol.seed", lo=0)
        mode = p.get("mode", "sequential")
        _require(mode in ("sequential", "parallel"), "protocol.mode",
                 "must be 'sequential' or 'parallel'")
        if "c_t" in p:
            _number(p["c_t"], "protocol.c_t", lo=0, strict_lo=True)
        if "kappa" in p and not isinstance(p["kappa"], str):
            _number(p["kappa"], "protocol.kappa", lo=0, strict_lo=True)
        if "noiseless" in p:
            _require(isinstance(p["noiseless"], bool), "protocol.noiseless",
                     "must be a boolean")
        if "n_points" in p:
            _integer(p["n_points"], "protocol.n_points", lo=8)
        if "dt_max" in p:
            _number(p["dt_max"], "protocol.dt_max", lo=0, strict_lo=True)

        if "solver" in c:
            self._validate_solver(c["solver"])
        if "output" in c:
            _check_keys(c["output"], "output", required=(),
                        optional=("dataset", "report", "report_csv", "run_record"))

    def _validate_potential(self, v, dom):
        _check_keys(v, "potential", required=("kind",),
                    optional=("value", "centers", "softening", "values",
                              "frequencies", "coefficients", "center",
                              "strength", "lipschitz"))
        kind = v["kind"]
        kinds = ("zero", "constant", "multi_coulomb", "softened_coulomb",
                 "step", "trig", "harmonic")
        _require(kind in kinds, "potential.kind", f"must be one of {kinds}")
        if kind == "constant":
            _number(v.get("value", None), "potential.value")
        if kind in ("multi_coulomb", "softened_coulomb"):
            centers = v.get("centers")
            _require(isinstance(centers, list) and centers, "potential.centers",
                     "must be a nonempty list")
            for i, entry in enumerate(centers):
                _check_keys(entry, f"potential.centers[{i}]",
                            required=("charge", "position"))
                _number(entry["charge"], f"potential.centers[{i}].charge",
                        lo=0, strict_lo=True)
                _require(isinstance(entry["position"], list)
                         and len(entry["position"]) == dom["d"],
                         f"potential.centers[{i}].position",
                         f"must be a list of {dom['d']} numbers")
        if kind == "softened_coulomb":
            _number(v.get("softening", None), "potential.softening",
                    lo=0, strict_lo=True)
        if kind == "step":
            _require(isinstance(v.get("values"), list), "potential.values",
                     "must be a nested list matching the grid shape")
        if kind == "trig":
            _require(isinstance(v.get("frequencies"), list), "potential.frequencies",
                     "must be a list of frequency vectors")
            _require(isinstance(v.get("coefficients"), list), "potential.coefficients",
                     "must be a list")
        if kind == "harmonic":
            _require(isinstance(v.get("center"), list)
                     and len(v["center"]) == dom["d"],
                     "potential.center", f"must be a list of {dom['d']} numbers")
            _number(v.get("strength", 1.0), "potential.strength")

    def _validate_solver(self, s):
        _check_keys(s, "solver", required=("kind",),
                    optional=("bounds", "K", "Lambda_lo", "Lambda_hi", "y_star",
                              "c_threshold", "epsilon", "C_V", "eps_v", "basis",
                              "force"))
        _require(s["kind"] in _SOLVERS, "solver.kind", f"must be one of {_SOLVERS}")
        if s["kind"] == "single_coulomb":
            bounds = s.get("bounds")
            _require(isinstance(bounds, list) and len(bounds) == 2,
                     "solver.bounds", "must be [Lambda_lo, Lambda_hi]")
        if s["kind"] == "multi_coulomb":
            for key in ("K", "Lambda_lo", "Lambda_hi", "y_star"):
                _require(key in s, f"solver.{key}", "is required")
            _integer(s["K"], "solver.K", lo=1)
        if s["kind"] == "step":
            _require("C_V" in s, "solver.C_V", "is required")
        if s["kind"] == "basis":
            basis = s.get("basis")
            _require(isinstance(basis, dict), "solver.basis", "must be an object")
            _check_keys(basis, "solver.basis", required=("kind",),
                        optional=("frequencies",))
            _require(basis["kind"] in ("step", "trig"), "solver.basis.kind",
                     "must be 'step' or 'trig'")

    # -- builders --------------------------------------------------------------
    def grid(self) -> BoxGrid:
        d = self.raw["domain"]
        return BoxGrid(L=float(d["L"]), m=int(d["m"]), d=int(d["d"]))

    def profile(self) -> Profile:
        return Profile.default_bump(self.grid().d)

    def potential(self):
        v = self.raw["potential"]
        kind = v["kind"]
        if kind == "zero":
            return pot.ZeroPotential()
        if kind == "constant":
            return pot.ConstantPotential(float(v["value"]))
        if kind in ("multi_coulomb", "softened_coulomb"):
            centers = [pot.CoulombCenter(charge=float(c["charge"]),
                                         position=tuple(c["position"]))
                       for c in v["centers"]]
            if kind == "multi_coulomb":
                return pot.MultiCoulomb(centers)
            return pot.SoftenedCoulomb(centers, float(v["softening"]))
        if kind == "step":
            return pot.StepPotential(self.grid(), np.asarray(v["values"], float))
        if kind == "trig":
            return pot.TrigPotential(v["frequencies"], v["coefficients"])
        if kind == "harmonic":
            return pot.HarmonicPotential(center=v["center"],
                                         strength=float(v.get("strength", 1.0)),
                                         domain_diameter=self.grid().L
                                         * np.sqrt(self.grid().d))
        raise ConfigError(f"potential.kind: unhandled {kind!r}")

    def kappa(self) -> float:
        p = self.raw["protocol"]
        kappa = p.get("kappa", DEFAULT_KAPPA)
        if isinstance(kappa, str):
            kappa = CalibrationReport.from_json(kappa).kappa
        return float(kappa)

    def plan(self, n_triples: int) -> SamplingPlan:
        p = self.raw["protocol"]
        return SamplingPlan.derive(
            epsilon=float(p["epsilon"]), delta=float(p["delta"]),
            grid=self.grid(), n_triples=n_triples,
            mode=p.get("mode", "sequential"), c_t=float(p.get("c_t", 1.0)),
            kappa=self.kappa(), noiseless=bool(p.get("noiseless", False)))

    def backend(self, triples=None):
        p = self.raw["protocol"]
        name = p["backend"]
        grid, profile, V = self.grid(), self.profile(), self.potential()
        kwargs = {}
        if "n_points" in p:
            kwargs["n_points"] = int(p["n_points"])
        if "dt_max" in p:
            kwargs["dt_max"] = float(p["dt_max"])
        if name == "exact":
            return OracleBackend(grid, profile, V)
        if name == "analytic":
            return AnalyticBackend(grid, profile, V, **kwargs)
        if name == "dense_fock":
            return DenseFockBackend(grid, profile, V, triples=triples, **kwargs)
        if name == "gaussian":
            return GaussianBackend(grid, profile, V, triples=triples, **kwargs)
        raise ConfigError(f"protocol.backend: unhandled {name!r}")

    def triples(self):
        return partition_triples(self.grid())

    def output_path(self, key, default=None):
        out = self.raw.get("output", {})
        val = out.get(key, default)
        return Path(val) if val is not None else None

    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    return ExperimentConfig(raw, source=str(path))
