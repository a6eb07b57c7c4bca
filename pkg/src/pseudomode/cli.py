"""Command-line driver: fit, build, simulate, heom, dephasing-oracle, compare, sweep, qrt-check.

Every command reads the hierarchical YAML config (``--config``), applies
``--set section.key=value`` overrides and writes its outputs plus a JSON report
into the output directory. Exit codes: 0 success, 1 a check or comparison failed,
2 invalid input, 3 numerical failure, 4 convergence failure.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .correlation import ExponentialSeries, correlation_quadrature, pole_expansion_eval
from .dynamics import (
    Trajectory,
    assemble_liouvillian,
    check_physicality,
    convergence_sweep,
    propagate,
    qrt_correlation,
)
from .exceptions import ConvergenceError, InputError, NumericalError, PseudomodeError, TruncationWarning
from .io import (
    DEFAULT_CONFIG,
    apply_overrides,
    environment_info,
    initial_state_from_config,
    load_config,
    load_series,
    save_series,
    sd_from_config,
    system_from_config,
    times_from_config,
    validate_config,
    write_json,
)
from .oracles import heom_config, heom_solve, pure_dephasing_exact
from .pseudomodes import PseudomodeSet, spin_boson_pipeline

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 1, 2, 3, 4

__all__ = ["main", "build_parser", "cmd_fit", "cmd_build", "cmd_simulate", "cmd_heom",
           "cmd_dephasing_oracle", "cmd_compare", "cmd_sweep", "cmd_qrt_check"]


def _outdir(cfg) -> Path:
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_report(command, cfg) -> dict:
    return {
        "command": command,
        "config": cfg,
        "seed": cfg["pipeline"]["fit"].get("random_state"),
        "environment": environment_info(),
    }


def _fit_kwargs(cfg) -> dict:
    return dict(cfg["pipeline"]["fit"])


def _pipeline(cfg, resonant_dim=None) -> PseudomodeSet:
    p, pmc = cfg["pipeline"], cfg["pseudomodes"]
    rdim = pmc["resonant_dim"] if resonant_dim is None else resonant_dim
    if rdim == "auto":
        rdim = int(pmc["sweep"]["start"])
    rdim = int(rdim)
    aux = pmc["aux_dim"]
    aux = max(rdim - 2, 2) if aux is None else int(aux)
    return spin_boson_pipeline(sd_from_config(cfg), p["mode"], int(p["k_fit"]), int(p["n_matsubara"]),
                               rdim, aux, _fit_kwargs(cfg))


# -- fit -----------------------------------------------------------------
def cmd_fit(cfg) -> dict:
    """Correlation-function decomposition: series file, residuals, spectral comparison table."""
    out = _outdir(cfg)
    report = _base_report("fit", cfg)
    sd = sd_from_config(cfg)
    series_path = out / "series.json"
    if sd.alpha == 0:
        save_series(ExponentialSeries(), series_path, {"trivial": True})
        report.update({"trivial": True, "n_terms": 0, "series_file": str(series_path)})
        write_json(out / "fit_report.json", report)
        return report
    pm = _pipeline(cfg, resonant_dim=2)
    series = pm.to_series()
    save_series(series, series_path, {"mode": cfg["pipeline"]["mode"], "dephasing_rate": pm.dephasing_rate})

    tau = np.linspace(0.0, float(cfg["pipeline"]["fit"]["t_max"]), 201)
    exact = correlation_quadrature(sd, tau)
    approx = pole_expansion_eval(series, tau)
    c0 = abs(exact[0])
    omega = np.linspace(-4.0 * sd.omega0 - 2.0, 4.0 * sd.omega0 + 2.0, 401)
    table = np.column_stack([omega, sd.thermal(omega), _effective(series, omega)])
    np.savetxt(out / "spectral_comparison.csv", table, delimiter=",", header="omega,gamma,gamma_prime",
               comments="", fmt="%.17g")
    report.update({
        "series_file": str(series_path),
        "n_terms": len(series),
        "fit": pm.metadata.get("fit"),
        "dephasing_rate": pm.dephasing_rate,
        "residue_real_sum": series.residue_real_sum(),
        "correlation_max_abs_error": float(np.max(np.abs(exact - approx))),
        "correlation_max_rel_error": float(np.max(np.abs(exact - approx)) / c0),
        "spectral_table": str(out / "spectral_comparison.csv"),
    })
    write_json(out / "fit_report.json", report)
    return report


def _effective(series, omega):
    from .correlation import effective_sd

    return effective_sd(series, omega) if len(series) else np.zeros_like(omega)


# -- build ---------------------------------------------------------------
def cmd_build(cfg, series_file=None) -> dict:
    """Pseudomode set from the config pipeline or from a series file."""
    out = _outdir(cfg)
    if series_file is not None:
        from .pseudomodes import series_to_pseudomodes

        series = load_series(series_file)
        rdim = cfg["pseudomodes"]["resonant_dim"]
        rdim = int(cfg["pseudomodes"]["sweep"]["start"]) if rdim == "auto" else int(rdim)
        dims = [rdim if abs(t.xi) > 0 else int(cfg["pseudomodes"]["aux_dim"] or max(rdim - 2, 2)) for t in series]
        labels = ["resonant" if abs(t.xi) > 0 else "matsubara" for t in series]
        pm = series_to_pseudomodes(series, dims, labels)
    else:
        pm = _pipeline(cfg)
    path = out / "pseudomodes.json"
    pm.save(path)
    report = _base_report("build", cfg)
    report.update({"pseudomode_file": str(path), "n_modes": len(pm), "dims": list(pm.dims),
                   "non_hermitian": not pm.is_hermitian(), "dephasing_rate": pm.dephasing_rate,
                   "negative_dephasing_rate": pm.dephasing_rate < 0})
    write_json(out / "build_report.json", report)
    return report


# -- simulate ------------------------------------------------------------
def _solver_kw(cfg) -> dict:
    s = cfg["solver"]
    return {"rtol": float(s["rtol"]), "atol": None if s["atol"] is None else float(s["atol"]),
            "method": s["method"], "top_threshold": float(s["top_threshold"])}


def cmd_simulate(cfg, pseudomode_file=None) -> dict:
    """Propagate the pseudomode master equation and write ``trajectory.csv``."""
    out = _outdir(cfg)
    sys_ = system_from_config(cfg)
    times = times_from_config(cfg)
    rho0 = initial_state_from_config(cfg)
    report = _base_report("simulate", cfg)
    skw = _solver_kw(cfg)
    if pseudomode_file is not None:
        pm = PseudomodeSet.load(pseudomode_file)
    elif cfg["pseudomodes"]["resonant_dim"] == "auto":
        sw = cfg["pseudomodes"]["sweep"]
        schedule = list(range(int(sw["start"]), int(sw["stop"]) + 1, int(sw["step"])))
        base = _pipeline(cfg, resonant_dim=schedule[0])
        rep = convergence_sweep(sys_, base, times, schedule, threshold=float(sw["threshold"]), rho_s0=rho0, **skw)
        report["sweep"] = rep.to_dict()
        if not rep.converged:
            raise ConvergenceError(f"Fock sweep {schedule} did not converge below {sw['threshold']}",
                                   rep.to_dict())
        pm = base.with_resonant_dim(int(rep.converged_at))
    else:
        pm = _pipeline(cfg)
    start = time.perf_counter()
    L = assemble_liouvillian(sys_, pm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        traj = propagate(L, rho0, times, **skw)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    report.update({
        "trajectory_file": str(path),
        "dims": list(pm.dims),
        "liouville_dim": L.dim,
        "non_hermitian": not pm.is_hermitian(),
        "dephasing_rate": pm.dephasing_rate,
        "pseudomodes": pm.to_dict(),
        "solver": traj.info,
        "physicality": check_physicality(traj),
        "max_top_population": traj.info.get("max_top_population"),
        "warnings": [str(w.message) for w in caught],
        "wall_time": time.perf_counter() - start,
    })
    write_json(out / "simulate_report.json", report)
    return report


# -- oracles -------------------------------------------------------------
def cmd_heom(cfg) -> dict:
    out = _outdir(cfg)
    h = cfg["heom"]
    sd = sd_from_config(cfg)
    hc = heom_config(sd, int(h["depth"]), n_matsubara=int(h["n_matsubara"]),
                     use_terminator=bool(h["use_terminator"]), n_total=int(cfg["pipeline"]["n_matsubara"]),
                     matsubara_depth=h.get("matsubara_depth"))
    traj = heom_solve(system_from_config(cfg), hc, initial_state_from_config(cfg), times_from_config(cfg),
                      depth_check=bool(h["depth_check"]), depth_tol=float(h["depth_tol"]))
    path = out / "heom.csv"
    traj.to_csv(path)
    report = _base_report("heom", cfg)
    report.update({"trajectory_file": str(path), "solver": traj.info, "physicality": check_physicality(traj)})
    if h["depth_check"] and not traj.info.get("depth_converged", True):
        report["warning"] = "hierarchy depth not converged"
    write_json(out / "heom_report.json", report)
    return report


def cmd_dephasing_oracle(cfg) -> dict:
    if float(cfg["system"]["delta_x"]) != 0.0:
        raise InputError("dephasing-oracle needs system.delta_x=0 (pure dephasing)")
    out = _outdir(cfg)
    rho0 = initial_state_from_config(cfg) if cfg.get("initial_state") != "excited" else None
    traj = pure_dephasing_exact(sd_from_config(cfg), float(cfg["system"]["epsilon"]), times_from_config(cfg), rho0)
    path = out / "dephasing_exact.csv"
    traj.to_csv(path)
    report = _base_report("dephasing-oracle", cfg)
    report.update({"trajectory_file": str(path), "decoherence_exponent_final": traj.info["decoherence_exponent"][-1]})
    write_json(out / "dephasing_report.json", report)
    return report


# -- compare -------------------------------------------------------------
OBSERVABLES = ("sx", "sy", "sz")


def cmd_compare(path_a, path_b, threshold=0.02, interpolate=False, observable="sz") -> dict:
    """Max/mean absolute differences per observable; PASS when ``observable`` is within ``threshold``."""
    a, b = Trajectory.from_csv(path_a), Trajectory.from_csv(path_b)
    if a.times.shape == b.times.shape and np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        grid, va, vb = a.times, a.observables, b.observables
        coh_a, coh_b = a.coherence, b.coherence
    elif interpolate:
        lo, hi = max(a.times[0], b.times[0]), min(a.times[-1], b.times[-1])
        coarse = a.times if a.times.size <= b.times.size else b.times
        grid = coarse[(coarse >= lo) & (coarse <= hi)]
        if grid.size == 0:
            raise InputError("trajectories have no overlapping time window")
        oa, ob = a.observables, b.observables
        va = {k: np.interp(grid, a.times, oa[k]) for k in OBSERVABLES}
        vb = {k: np.interp(grid, b.times, ob[k]) for k in OBSERVABLES}
        coh_a = np.interp(grid, a.times, np.abs(a.coherence))
        coh_b = np.interp(grid, b.times, np.abs(b.coherence))
    else:
        raise InputError("time grids differ; pass --interpolate to compare on the coarser grid")
    diffs = {}
    for k in OBSERVABLES:
        d = np.abs(np.asarray(va[k]) - np.asarray(vb[k]))
        diffs[k] = {"max_abs": float(d.max()), "mean_abs": float(d.mean())}
    d = np.abs(np.abs(coh_a) - np.abs(coh_b))
    diffs["abs_rho_eg"] = {"max_abs": float(d.max()), "mean_abs": float(d.mean())}
    if observable not in diffs:
        raise InputError(f"observable must be one of {sorted(diffs)}")
    worst = diffs[observable]["max_abs"]
    return {"command": "compare", "a": str(path_a), "b": str(path_b), "n_times": int(grid.size),
            "observable": observable, "threshold": threshold, "differences": diffs,
            "max_abs_difference": worst, "status": "PASS" if worst < threshold else "FAIL"}


# -- sweep ---------------------------------------------------------------
def _parse_vary(items):
    axes = []
    for item in items or ():
        if "=" not in item:
            raise InputError(f"--vary {item!r} must look like section.key=v1,v2")
        key, raw = item.split("=", 1)
        values = [yaml.safe_load(v) for v in raw.split(",") if v.strip()]
        if not values:
            raise InputError(f"--vary {key} has no values")
        axes.append((key, values))
    return axes


def _sweep_job(args):
    task, cfg = args
    try:
        rep = (cmd_heom if task == "heom" else cmd_simulate)(cfg)
        return {"status": "ok", "output": cfg["output"]["directory"], "report": rep.get("trajectory_file")}
    except PseudomodeError as exc:
        return {"status": "error", "output": cfg["output"]["directory"], "error": str(exc),
                "exit_code": _exit_code(exc)}


def cmd_sweep(cfg, vary, task="simulate", jobs=1) -> dict:
    """Run ``task`` over the Cartesian product of ``--vary`` axes, ``jobs`` processes at a time."""
    axes = _parse_vary(vary)
    if not axes:
        raise InputError("sweep needs at least one --vary axis")
    if task not in ("simulate", "heom"):
        raise InputError("sweep task must be simulate or heom")
    root = _outdir(cfg)
    points = []
    for combo in itertools.product(*[vals for _, vals in axes]):
        sub = apply_overrides(cfg, [f"{k}={json.dumps(v)}" for (k, _), v in zip(axes, combo)])
        validate_config(sub)
        tag = "_".join(f"{k.split('.')[-1]}-{v}" for (k, _), v in zip(axes, combo))
        sub["output"]["directory"] = str(root / tag)
        points.append((task, sub))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_job, points))
    else:
        results = [_sweep_job(p) for p in points]
    report = _base_report("sweep", cfg)
    report.update({"task": task, "axes": [{"key": k, "values": v} for k, v in axes], "results": results})
    write_json(root / "sweep_report.json", report)
    return report


# -- qrt-check -----------------------------------------------------------
def cmd_qrt_check(cfg, pseudomode_file=None, fock_dim=3, tol=1e-8, t_max=None, n_points=201) -> dict:
    """Regression-theorem correlation of the free modes vs the series they were built from."""
    pm = PseudomodeSet.load(pseudomode_file) if pseudomode_file else _pipeline(cfg)
    pm = pm.with_dims([int(fock_dim)] * len(pm))
    t_max = float(cfg["pipeline"]["fit"]["t_max"]) if t_max is None else float(t_max)
    taus = np.linspace(0.0, t_max, int(n_points))
    qrt = qrt_correlation(pm, taus)
    ref = pole_expansion_eval(pm.to_series(), taus) if len(pm) else np.zeros_like(qrt)
    err = float(np.max(np.abs(qrt - ref))) if len(pm) else 0.0
    report = _base_report("qrt-check", cfg)
    report.update({"fock_dim": int(fock_dim), "n_modes": len(pm), "max_abs_error": err, "tolerance": tol,
                   "status": "PASS" if err < tol else "FAIL"})
    write_json(_outdir(cfg) / "qrt_report.json", report)
    return report


# -- driver --------------------------------------------------------------
def _exit_code(exc) -> int:
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (InputError, ValueError, OSError)):
        return EXIT_INPUT
    return EXIT_NUMERICAL


def _add_config_args(p):
    p.add_argument("-c", "--config", help="YAML config file (defaults: strong-coupling benchmark with omega0=0.5)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config key, e.g. --set bath.omega0=0.25 (repeatable)")
    p.add_argument("-o", "--out", help="output directory (overrides output.directory)")


def build_parser() -> argparse.ArgumentParser:
    defaults = yaml.safe_dump(DEFAULT_CONFIG, sort_keys=False)
    parser = argparse.ArgumentParser(
        prog="pseudomode",
        description="Pseudomode simulations of the spin-boson model with reference oracles.",
        epilog="Default configuration:\n" + defaults
        + "\nExit codes: 0 ok, 1 check failed, 2 input error, 3 numerical error, 4 not converged.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="decompose C(tau) and write series.json plus fit_report.json")
    _add_config_args(p)
    p = sub.add_parser("build", help="write pseudomodes.json")
    _add_config_args(p)
    p.add_argument("--series", help="build from an existing series file instead of the pipeline")
    p = sub.add_parser("simulate", help="propagate the pseudomode master equation")
    _add_config_args(p)
    p.add_argument("--pseudomodes", help="pseudomode-set file to simulate")
    p = sub.add_parser("heom", help="hierarchy reference solution")
    _add_config_args(p)
    p = sub.add_parser("dephasing-oracle", help="exact pure-dephasing solution (needs system.delta_x=0)")
    _add_config_args(p)
    p = sub.add_parser("compare", help="diff two trajectory CSV files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--threshold", type=float, default=0.02)
    p.add_argument("--observable", default="sz", help="sx, sy, sz or abs_rho_eg (default sz)")
    p.add_argument("--interpolate", action="store_true", help="interpolate onto the coarser grid")
    p.add_argument("--report", help="write the JSON diff report here (default: stdout only)")
    p = sub.add_parser("sweep", help="fan out simulate/heom over parameter values")
    _add_config_args(p)
    p.add_argument("--vary", action="append", default=[], metavar="SECTION.KEY=V1,V2,...")
    p.add_argument("--task", choices=("simulate", "heom"), default="simulate")
    p.add_argument("-j", "--jobs", type=int, default=1)
    p = sub.add_parser("qrt-check", help="check C'(tau) from the regression theorem against the series")
    _add_config_args(p)
    p.add_argument("--pseudomodes", help="pseudomode-set file (default: build from config)")
    p.add_argument("--fock-dim", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-8)
    return parser


def _resolve_config(args) -> dict:
    cfg = apply_overrides(load_config(args.config), args.overrides)
    if args.out:
        cfg["output"]["directory"] = args.out
    return validate_config(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            report = cmd_compare(args.a, args.b, args.threshold, args.interpolate, args.observable)
            if args.report:
                write_json(args.report, report)
            print(json.dumps(report, indent=2))
            return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL
        cfg = _resolve_config(args)
        if args.command == "fit":
            report = cmd_fit(cfg)
        elif args.command == "build":
            report = cmd_build(cfg, args.series)
        elif args.command == "simulate":
            report = cmd_simulate(cfg, args.pseudomodes)
        elif args.command == "heom":
            report = cmd_heom(cfg)
        elif args.command == "dephasing-oracle":
            report = cmd_dephasing_oracle(cfg)
        elif args.command == "sweep":
            report = cmd_sweep(cfg, args.vary, args.task, args.jobs)
            failed = [r for r in report["results"] if r["status"] != "ok"]
            print(json.dumps({"points": len(report["results"]), "failed": len(failed)}))
            return max((r["exit_code"] for r in failed), default=EXIT_OK)
        else:
            report = cmd_qrt_check(cfg, args.pseudomodes, args.fock_dim, args.tol)
            print(json.dumps({"max_abs_error": report["max_abs_error"], "status": report["status"]}))
            return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL
    except PseudomodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    summary = {k: report[k] for k in ("trajectory_file", "series_file", "pseudomode_file") if k in report}
    print(json.dumps(summary or {"command": args.command, "status": "ok"}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
