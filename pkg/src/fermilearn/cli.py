"""Command line interface: simulate, reconstruct, plan, validate, calibrate.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 validation failure.

Environment overrides (validation/testing only):
  FERMILEARN_KAPPA     override the derivative constant used by `validate`
  FERMILEARN_QUAD_TOL  override the local-average quadrature tolerance
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .grid import (BoxGrid, Orbital, Profile, box_index_list, kinetic_energy,
                   local_average, partition_triples)
from .measurement import (GAMMA_SEQUENTIAL, OracleBackend, gamma_parallel,
                          omega_from_differences, run_protocol)
from .backends import (AnalyticBackend, DenseFockBackend, GaussianBackend,
                       MeasurementSetting, PAIRS)
from .backends.calibrate import DEFAULT_KAPPA, calibrate_derivative_constant
from . import coulomb as clb
from . import basis as bas
from . import potentials as pot

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


@click.group()
@click.version_option(version=__version__, prog_name="fermilearn")
def main():
    """Desk-scale simulator and solvers for learning fermion potentials."""


def _load_or_exit(config_path):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
def simulate(config_path):
    """Run the measurement protocol and write the omega dataset."""
    cfg = _load_or_exit(config_path)
    dataset_path = cfg.output_path("dataset")
    if dataset_path is None:
        click.echo("config error: output.dataset is required for simulate", err=True)
        sys.exit(EXIT_CONFIG)

    start = time.time()
    grid = cfg.grid()
    triples = cfg.triples()
    backend = cfg.backend(triples=triples)
    kappa = cfg.kappa()
    if isinstance(backend, OracleBackend):
        plan = None
        dataset = run_protocol(grid, triples, backend, plan=_oracle_plan(cfg),
                               profile=cfg.profile(),
                               rng_seed=cfg.raw["protocol"]["seed"], kappa=kappa)
    else:
        plan = cfg.plan(n_triples=max(1, len(triples)))
        dataset = run_protocol(grid, triples, backend, plan,
                               profile=cfg.profile(),
                               rng_seed=cfg.raw["protocol"]["seed"], kappa=kappa)
    dataset.meta["config_hash"] = cfg.hash()
    dataset_path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_csv(dataset_path)
    click.echo(f"wrote {dataset_path} ({len(dataset)} boxes)")

    record_path = cfg.output_path("run_record")
    if record_path is not None:
        record = {
            "config_hash": cfg.hash(),
            "dataset": str(dataset_path),
            "elapsed_s": time.time() - start,
            "version": __version__,
            "kappa": kappa,
        }
        record_path.write_text(json.dumps(record, indent=2, sort_keys=True))


def _oracle_plan(cfg):
    # the oracle bypasses sampling; a placeholder plan keeps the signature
    from .measurement import SamplingPlan
    return SamplingPlan(epsilon=cfg.raw["protocol"]["epsilon"],
                        delta=cfg.raw["protocol"]["delta"], t=1.0, T=1,
                        triples_measured=1, gamma_exponent=GAMMA_SEQUENTIAL,
                        epsilon_p=0.5, noiseless=True)


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.argument("dataset_path", type=click.Path(exists=True))
def reconstruct(config_path, dataset_path):
    """Run the configured solver on a dataset and write the report."""
    from .measurement import OmegaDataset

    cfg = _load_or_exit(config_path)
    if "solver" not in cfg.raw:
        click.echo("config error: solver section is required for reconstruct",
                   err=True)
        sys.exit(EXIT_CONFIG)
    report_path = cfg.output_path("report")
    if report_path is None:
        click.echo("config error: output.report is required for reconstruct",
                   err=True)
        sys.exit(EXIT_CONFIG)

    data = OmegaDataset.from_csv(dataset_path)
    grid = cfg.grid()
    if (data.grid.L, data.grid.m, data.grid.d) != (grid.L, grid.m, grid.d):
        click.echo("config error: dataset grid does not match the config grid",
                   err=True)
        sys.exit(EXIT_CONFIG)

    try:
        report, rows = _dispatch_solver(cfg, data)
    except (clb.DetectionError, clb.IllConditionedError,
            clb.InconsistentDataError, clb.NonContractionError,
            ValueError, RuntimeError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)

    report["config_hash"] = cfg.hash()
    report["kappa"] = data.meta.get("kappa", cfg.kappa())
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    click.echo(f"wrote {report_path}")

    csv_path = cfg.output_path("report_csv")
    if csv_path is not None:
        lines = ["quantity,estimate,bound"]
        lines += [f"{q},{e!r},{b!r}" for q, e, b in rows]
        csv_path.write_text("\n".join(lines) + "\n")
        click.echo(f"wrote {csv_path}")


def _dispatch_solver(cfg, data):
    s = cfg.raw["solver"]
    kind = s["kind"]
    grid = cfg.grid()
    profile = cfg.profile()
    if kind == "single_coulomb":
        peak = clb.find_peak(data)
        probes = clb.select_probe_points(peak, grid, force=bool(s.get("force")))
        result = clb.solve_single(data, probes, bounds=tuple(s["bounds"]))
        report = {
            "solver": "single_coulomb",
            "charge_hat": result.charge_hat,
            "position_hat": list(result.position_hat),
            "peak_box": list(result.peak_box),
            "probe_points": [list(b) for b in result.probe_points],
            "system_condition": result.system_condition,
        }
        rows = [("charge", result.charge_hat, "")]
        rows += [(f"position_{i}", c, "") for i, c in enumerate(result.position_hat)]
        return report, rows
    if kind == "multi_coulomb":
        mcfg = clb.MultiCoulombConfig(
            K=int(s["K"]), Lambda_lo=float(s["Lambda_lo"]),
            Lambda_hi=float(s["Lambda_hi"]), y_star=float(s["y_star"]),
            c_threshold=s.get("c_threshold"))
        result = clb.solve_multi(data, mcfg, grid, profile,
                                 epsilon=float(s.get("epsilon", 1e-3)))
        report = {
            "solver": "multi_coulomb",
            "charges": list(result.charges),
            "positions": [list(p) for p in result.positions],
            "center_boxes": [list(b) for b in result.center_boxes],
            "charge_diagnostics": result.charge_diagnostics,
            "grid_validity": result.grid_validity,
            "rounds": len(result.trace),
        }
        rows = [(f"charge_{k}", c, "") for k, c in enumerate(result.charges)]
        return report, rows
    if kind == "step":
        epsilon = float(s.get("epsilon", 0.0))
        step_v, bound = bas.step_reconstruct(data, C_V=float(s["C_V"]),
                                             epsilon=epsilon)
        report = {
            "solver": "step",
            "values": step_v.values.tolist(),
            "sup_bound": bound,
        }
        return report, [("sup_bound", bound, bound)]
    if kind == "basis":
        spec = s["basis"]
        if spec["kind"] == "step":
            basis = bas.StepBasis(grid)
        else:
            basis = bas.TrigBasis(tuple(map(tuple, spec["frequencies"])))
        overlap = bas.assemble_overlap(basis, grid, profile)
        omega = np.array([data.omega(j) for j in box_index_list(grid)])
        rep = bas.pseudo_solve(overlap, omega,
                               epsilon=float(s.get("epsilon", 0.0)),
                               eps_v=float(s.get("eps_v", 0.0)))
        report = {
            "solver": "basis",
            "coefficients_real": np.real(rep.coefficients).tolist(),
            "coefficients_imag": np.imag(rep.coefficients).tolist(),
            "pinv_norm2": rep.pinv_norm2,
            "pinv_norm_inf": rep.pinv_norm_inf,
            "condition": rep.condition,
            "residual": rep.residual,
            "bound": rep.bound,
            "rank_deficient": rep.rank_deficient,
        }
        rows = [(f"coefficient_{i}", float(np.real(c)), rep.bound)
                for i, c in enumerate(rep.coefficients)]
        return report, rows
    raise ConfigError(f"solver.kind: unhandled {kind!r}")


@main.command()
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--triples", type=int, required=True)
@click.option("--ell", type=float, required=True, help="box side length")
@click.option("--d", "dim", type=int, default=3, show_default=True)
@click.option("--mode", type=click.Choice(["sequential", "parallel"]),
              default="sequential", show_default=True)
@click.option("--c-t", type=float, default=1.0, show_default=True)
@click.option("--kappa", type=float, default=DEFAULT_KAPPA, show_default=True)
def plan(epsilon, delta, triples, ell, dim, mode, c_t, kappa):
    """Print the sampling plan for a target precision."""
    from .measurement import SamplingPlan

    grid = BoxGrid(L=ell, m=1, d=dim)
    try:
        p = SamplingPlan.derive(epsilon, delta, grid, triples, mode=mode,
                                c_t=c_t, kappa=kappa)
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    settings = 3 * (triples if mode == "sequential" else 1)
    total_shots = p.T * 3 * triples
    total_time = p.T * p.t * settings
    gamma = GAMMA_SEQUENTIAL if mode == "sequential" else gamma_parallel(dim)
    click.echo(f"shots per setting      T = {p.T}")
    click.echo(f"evolution time         t = {p.t:.6g}")
    click.echo(f"probability precision  eps_p = {p.epsilon_p:.6g}")
    click.echo(f"total shots            {total_shots}")
    click.echo(f"total evolution time   {total_time:.6g}")
    click.echo(f"scaling                O(ell^(-2*{gamma}) * eps^-3 "
               f"* log(6*{triples}/delta))  [theorem display: log(3*{triples}/delta)]")


@main.command()
@click.option("--output", type=click.Path(), default="calibration.json",
              show_default=True)
def calibrate(output):
    """Measure the derivative constant kappa against the dense Fock oracle."""
    report = calibrate_derivative_constant()
    report.to_json(output)
    click.echo(f"kappa = {report.kappa:.8f} (pair spread {report.max_pair_spread:.2e})")
    click.echo(f"wrote {output}")


@main.command()
def validate():
    """Cross-backend, shell-theorem, kappa and sign-convention checks."""
    failures = []

    def check(name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        click.echo(f"[{status}] {name}" + (f"  ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(20240811)

    # shell theorem vs quadrature
    grid = BoxGrid(L=8.0, m=8, d=3)
    profile = Profile.default_bump(3)
    worst = 0.0
    for _ in range(3):
        box = tuple(rng.integers(0, 8, size=3).tolist())
        orb = Orbital(grid=grid, box=box, profile=profile)
        while True:
            y = rng.uniform(0, 8, size=3)
            if np.linalg.norm(y - orb.center) > orb.support_radius + 0.3:
                break
        lam = float(rng.uniform(0.5, 5.0))
        V = pot.MultiCoulomb([pot.CoulombCenter(lam, tuple(y))])
        shell = pot.shell_average(V, orb.center, orb.support_radius)
        quad = local_average(V, orb)
        worst = max(worst, abs(quad - shell) / abs(shell))
    check("shell-theorem vs quadrature", worst < 1e-8, f"max rel dev {worst:.2e}")

    # analytic vs dense Fock (global vacuum), 1D
    grid1 = BoxGrid(L=3.0, m=3, d=1)
    prof1 = Profile.default_bump(1)
    V1 = pot.HarmonicPotential(center=[1.5], strength=0.3)
    triple = ((0,), (1,), (2,))
    dev = 0.0
    for t in (0.02, 0.05):
        setting = MeasurementSetting(triple=triple, pair=(0, 1), time=t)
        pa = AnalyticBackend(grid1, prof1, V1).probability(setting)
        pf = DenseFockBackend(grid1, prof1, V1, projector="global").probability(setting)
        dev = max(dev, abs(pa - pf))
    check("analytic vs dense Fock (global)", dev < 1e-8, f"max dev {dev:.2e}")

    # gaussian conventions + protocol cross-check
    try:
        GaussianBackend.ensure_validated()
        setting = MeasurementSetting(triple=triple, pair=(0, 2), time=0.02)
        pg = GaussianBackend(grid1, prof1, V1).probability(setting)
        pf = DenseFockBackend(grid1, prof1, V1, projector="regional").probability(setting)
        check("gaussian vs dense Fock (regional)", abs(pg - pf) < 1e-8,
              f"dev {abs(pg - pf):.2e}")
    except Exception as exc:  # convention failures must fail validation
        check("gaussian vs dense Fock (regional)", False, str(exc))

    # kappa consistency (env override must break it)
    report = calibrate_derivative_constant(times=(2e-3, 1e-3))
    effective = float(os.environ.get("FERMILEARN_KAPPA", DEFAULT_KAPPA))
    check("kappa calibration consistency",
          abs(report.kappa - effective) < 1e-3,
          f"calibrated {report.kappa:.6f} vs effective {effective:.6f}")

    # sigma-combination involution
    rng2 = np.random.default_rng(7)
    omegas = rng2.normal(size=3)
    tkin = 1.7
    kappa = 0.5
    diffs = {pair: kappa * (omegas[pair[0]] + omegas[pair[1]] + 2 * tkin)
             for pair in PAIRS}
    rec = omega_from_differences(diffs, kappa, tkin)
    check("sigma-combination involution",
          max(abs(r - o) for r, o in zip(rec, omegas)) < 1e-12)

    if failures:
        click.echo(f"{len(failures)} check(s) failed: {failures}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo("all validation checks passed")


if __name__ == "__main__":
    main()
