"""Configuration-driven experiment runner.

Subcommands:
    run <config>          execute the experiment, write CSV/binary artifacts
    emit-config <kind>    print a complete runnable config with defaults
    validate <config>     parse and type-check only

Exit codes: 0 success, 1 config error, 2 runtime/solver error.  All CSVs use
'.' decimals, LF line endings, a header row, and 17 significant digits.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import les, les_adjoint
from .config import ConfigError, EXPERIMENT_KINDS, ExperimentConfig, emit_builtin_config, load_config
from .descent import DescentOptions, DescentTrace, descend
from .kappa import KappaSpec, kappa_sweep, write_kappa_csv
from .numerics import SobolevMetric
from .problems import ClosureProblem, HeatProblem, flux_perturbation

log = logging.getLogger(__name__)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(path, trace: DescentTrace, j0: float, c0: float) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("n,J,J_norm,constraint,constraint_norm,tau,grad_norm,pgrad_norm\n")
        for r in trace.records:
            cells = [str(r.n), _fmt(r.objective), _fmt(r.objective / j0),
                     _fmt(r.constraint), _fmt(r.constraint / c0), _fmt(r.step),
                     _fmt(r.grad_norm), _fmt(r.pgrad_norm)]
            fh.write(",".join(cells) + "\n")


def write_control_csv(path, abscissa: np.ndarray, values: np.ndarray, label: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{label},phi\n")
        for a, v in zip(abscissa, values):
            fh.write(f"{_fmt(a)},{_fmt(v)}\n")


def write_summary(path, entries: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def _epsilons(cfg: ExperimentConfig) -> np.ndarray:
    return np.logspace(math.log10(cfg["kappa.eps_max"]),
                       math.log10(cfg["kappa.eps_min"]),
                       cfg["kappa.eps_count"])


def _build_heat_problem(cfg: ExperimentConfig, problem: int, nx: int, nt: int) -> HeatProblem:
    return HeatProblem.build(
        nx=nx, nt=nt, homogeneous_ic=(problem == 1),
        a=cfg["heat.a"], b=cfg["heat.b"], T=cfg["heat.T"], ell=cfg["heat.ell1"],
        E0=cfg.values.get("heat.E0"),
        u0_amplitude=cfg["heat.u0_amplitude"],
        target_c_lin=cfg["heat.target_flux_coef_linear"],
        target_c_osc=cfg["heat.target_flux_coef_osc"],
        init_amplitude=cfg["heat.init_flux_amplitude"])


def _ns_config(cfg: ExperimentConfig, dt=None) -> les.NsConfig:
    if cfg["les.paper_scale"]:
        n_dns, n_les, k_c, horizon = 256, 64, 8, 50.0
    else:
        n_dns, n_les, k_c, horizon = (cfg["les.n_dns"], cfg["les.n_les"],
                                      cfg["les.k_c"], cfg["les.T"])
    return les.NsConfig(
        nu_n=cfg["les.nu_n"], alpha=cfg["les.alpha"],
        forcing_amplitude=cfg["les.forcing_amplitude"],
        forcing_k_lo=cfg["les.forcing_k"], forcing_k_hi=cfg["les.forcing_k"],
        forcing_seed=cfg["les.forcing_seed"],
        n_dns=n_dns, n_les=n_les, k_c=k_c,
        dt=cfg["les.dt"] if dt is None else dt, T=horizon,
        nu0=cfg["les.nu0"], n_sigma=cfg["les.n_sigma"],
        metric=SobolevMetric(2, (cfg["les.ell1"], cfg["les.ell2"])),
        w0_seed=cfg["les.w0_seed"], w0_kmax=cfg["les.w0_kmax"],
        w0_enstrophy=cfg["les.w0_enstrophy"], spin_time=cfg["les.spin_time"])


def _build_closure_problem(cfg: ExperimentConfig, dt=None) -> ClosureProblem:
    ns = _ns_config(cfg, dt=dt)
    c_given = cfg["les.leith_constant"]
    return ClosureProblem.build(ns, tune_constant=c_given is None,
                                c_leith=4.702e-3 if c_given is None else c_given)


def run_kappa_heat(cfg: ExperimentConfig, outdir: Path) -> dict:
    written = []
    for nx, nt in cfg["kappa.resolutions"]:
        prob = _build_heat_problem(cfg, cfg["heat.problem"], nx, nt)
        adapter = prob.adapter()
        direction = flux_perturbation(prob.tgrid.nodes())
        for quantity in cfg["kappa.quantities"]:
            spec = KappaSpec(adapter, prob.phi0, direction, _epsilons(cfg), quantity)
            report = kappa_sweep(spec)
            name = f"kappa_{quantity}_nx{nx}_nt{nt}.csv"
            write_kappa_csv(outdir / name, report)
            written.append(name)
    return {"sweeps": len(written), "files": " ".join(written)}


def run_kappa_les(cfg: ExperimentConfig, outdir: Path) -> dict:
    written = []
    for dt in cfg["kappa.dts"]:
        prob = _build_closure_problem(cfg, dt=dt)
        adapter = prob.adapter()
        for pert in cfg["kappa.perturbations"]:
            direction = prob.perturbation(pert)
            for quantity in cfg["kappa.quantities"]:
                spec = KappaSpec(adapter, prob.phi0.values, direction,
                                 _epsilons(cfg), quantity)
                report = kappa_sweep(spec)
                name = f"kappa_{quantity}_{pert}_dt{dt:g}.csv"
                write_kappa_csv(outdir / name, report)
                written.append(name)
    return {"sweeps": len(written), "files": " ".join(written)}


def run_opt_heat(cfg: ExperimentConfig, outdir: Path, problem: int, constrained: bool) -> dict:
    prob = _build_heat_problem(cfg, problem, cfg["heat.nx"], cfg["heat.nt"])
    adapter = prob.adapter()
    opts = DescentOptions(
        max_iters=cfg["descent.max_iters"], rel_tol=cfg["descent.rel_tol"],
        step_cap=cfg["descent.step_cap"], constrained=constrained,
        use_pr_cg=not constrained, brent_tol=cfg["descent.brent_tol"],
        max_line_evals=cfg["descent.max_line_evals"])
    t = prob.tgrid.nodes()
    write_control_csv(outdir / "control_initial.csv", t, prob.phi0, "t")
    started = time.perf_counter()
    phi, trace = descend(adapter, prob.phi0, opts)
    elapsed = time.perf_counter() - started
    write_control_csv(outdir / "control_final.csv", t, phi, "t")
    j0 = trace.records[0].objective
    c0 = trace.records[0].constraint
    write_trace_csv(outdir / "trace.csv", trace, j0, c0)
    return {
        "iterations": trace.records[-1].n,
        "J_over_J0": _fmt(trace.records[-1].objective / j0),
        "constraint_ratio": _fmt(trace.records[-1].constraint / prob.cfg.E0),
        "wall_seconds": f"{elapsed:.2f}",
    }


def run_opt_les(cfg: ExperimentConfig, outdir: Path, constrained: bool) -> dict:
    prob = _build_closure_problem(cfg)
    ns = prob.cfg
    if constrained and cfg["les.E0"] is not None:
        ns = ns.resolved(E0=cfg["les.E0"])
        prob.cfg = ns
    adapter = prob.adapter()
    opts = DescentOptions(
        max_iters=cfg["descent.max_iters"], rel_tol=cfg["descent.rel_tol"],
        step_cap=cfg["descent.step_cap"], constrained=constrained,
        use_pr_cg=not constrained, brent_tol=cfg["descent.brent_tol"],
        max_line_evals=cfg["descent.max_line_evals"])
    sigma = prob.phi0.sigma
    write_control_csv(outdir / "control_initial.csv", sigma, prob.phi0.values, "sigma")
    les.write_diagnostics_csv(outdir / "diag_reference.csv",
                              ns.dt * np.arange(ns.nt + 1),
                              prob.dns_enstrophy, prob.dns_palinstrophy)
    hist0 = les.run_les(ns, prob.w0_les, prob.phi0, store_fields=False)
    les.write_diagnostics_csv(outdir / "diag_les_initial.csv", hist0.times,
                              hist0.enstrophy, hist0.palinstrophy)
    started = time.perf_counter()
    phi, trace = descend(adapter, prob.phi0.values, opts)
    elapsed = time.perf_counter() - started
    write_control_csv(outdir / "control_final.csv", sigma, phi, "sigma")
    hist1 = les.run_les(ns, prob.w0_les, les.StateFunction(phi), store_fields=False)
    les.write_diagnostics_csv(outdir / "diag_les_final.csv", hist1.times,
                              hist1.enstrophy, hist1.palinstrophy)
    j0 = trace.records[0].objective
    c0 = trace.records[0].constraint
    write_trace_csv(outdir / "trace.csv", trace, j0, c0)
    return {
        "iterations": trace.records[-1].n,
        "J_over_J0": _fmt(trace.records[-1].objective / j0),
        "constraint_ratio": _fmt(trace.records[-1].constraint / ns.E0),
        "leith_constant": _fmt(prob.c_leith),
        "s_max": _fmt(ns.s_max),
        "wall_seconds": f"{elapsed:.2f}",
    }


def run_solve_dns(cfg: ExperimentConfig, outdir: Path) -> dict:
    ns = _ns_config(cfg)
    store = cfg["output.snapshots"]
    result = les.run_dns(ns, store_fields=store)
    les.write_diagnostics_csv(outdir / "diag_dns.csv", result.history.times,
                              result.history.enstrophy, result.history.palinstrophy)
    les.write_diagnostics_csv(outdir / "diag_dns_filtered.csv", result.history.times,
                              result.filtered_enstrophy, result.filtered_palinstrophy)
    if store:
        les.write_snapshots(result.history, outdir / "snapshots.bin")
    t_e = les.eddy_turnover_time(result.history.times, result.history.enstrophy)
    return {"eddy_turnover_time": _fmt(t_e),
            "mean_filtered_enstrophy": _fmt(les.constraint_enstrophy(
                ns, result.filtered_enstrophy))}


def run_solve_les(cfg: ExperimentConfig, outdir: Path) -> dict:
    prob = _build_closure_problem(cfg)
    ns = prob.cfg
    hist = les.run_les(ns, prob.w0_les, prob.phi0,
                       store_fields=cfg["output.snapshots"])
    les.write_diagnostics_csv(outdir / "diag_les.csv", hist.times,
                              hist.enstrophy, hist.palinstrophy)
    if cfg["output.snapshots"]:
        les.write_snapshots(hist, outdir / "snapshots.bin")
    return {"leith_constant": _fmt(prob.c_leith),
            "mean_enstrophy": _fmt(les.constraint_enstrophy(ns, hist.enstrophy))}


_RUNNERS = {
    "kappa-heat": run_kappa_heat,
    "kappa-les": run_kappa_les,
    "opt-heat-1A": lambda c, o: run_opt_heat(c, o, 1, False),
    "opt-heat-1B": lambda c, o: run_opt_heat(c, o, 1, True),
    "opt-heat-2A": lambda c, o: run_opt_heat(c, o, 2, False),
    "opt-heat-2B": lambda c, o: run_opt_heat(c, o, 2, True),
    "opt-les-3A": lambda c, o: run_opt_les(c, o, False),
    "opt-les-3B": lambda c, o: run_opt_les(c, o, True),
    "solve-dns": run_solve_dns,
    "solve-les": run_solve_les,
}


def run_experiment(cfg: ExperimentConfig, outdir: Path) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    summary = _RUNNERS[cfg.kind](cfg, outdir)
    summary["kind"] = cfg.kind
    summary["total_wall_seconds"] = f"{time.perf_counter() - started:.2f}"
    write_summary(outdir / "summary", summary)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adjopt",
        description="Adjoint-based PDE optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: out/<kind>)")

    p_emit = sub.add_parser("emit-config", help="print a builtin config")
    p_emit.add_argument("kind", choices=EXPERIMENT_KINDS)

    p_val = sub.add_parser("validate", help="parse and type-check a config")
    p_val.add_argument("config", help="path to the config file")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.command == "emit-config":
        print(emit_builtin_config(args.kind))
        return 0

    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"ok: {cfg.kind}")
        return 0

    outdir = Path(args.out) if args.out else Path("out") / cfg.kind
    try:
        summary = run_experiment(cfg, outdir)
    except Exception as exc:  # solver/runtime failure
        print(f"error while running {cfg.kind}: {exc}", file=sys.stderr)
        return 2
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
