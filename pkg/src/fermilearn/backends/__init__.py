"""Exact evaluators of the protocol's measurement probabilities.

Three mutually validating backends compute ``p_j^{ab}(t)``:

* :mod:`.analytic` — closed-form single-triple amplitude from one-body
  overlaps (global-vacuum convention),
* :mod:`.fock` — dense Fock-space oracle on a small mode set (regional or
  global projector),
* :mod:`.gaussian` — Wick/Pfaffian evaluation for pairing states, scaling
  past the dense mode budget.
"""

from .base import PAIRS, MeasurementSetting, OrbitalEngine
from .analytic import AnalyticBackend, p_analytic_single
from .fock import DenseFockBackend, fock_dense_probability
from .gaussian import (GaussianBackend, GaussianStateSpec, GaussianState,
                       gaussian_probability)
from .calibrate import CalibrationReport, calibrate_derivative_constant

__all__ = [
    "PAIRS", "MeasurementSetting", "OrbitalEngine",
    "AnalyticBackend", "p_analytic_single",
    "DenseFockBackend", "fock_dense_probability",
    "GaussianBackend", "GaussianStateSpec", "GaussianState",
    "gaussian_probability",
    "CalibrationReport", "calibrate_derivative_constant",
]
