"""Command-line entry points.

Subcommands: simulate, stationary, gainfield, schrodinger, study <name>,
constants, validate.  Every run that writes artifacts owns its output
directory exclusively, emits CSV series plus a manifest.json with the full
config echo, the computed constants, contraction data, wall time, and a
checksum per emitted file.  The manifest is written even when the run
fails, with an error section.

Exit codes: 0 success, 1 numerical failure, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_config, initial_state, parse_config
from .discretization import Grid, build_operator, make_quadrature
from .errors import NeuralFieldError, ParseError, SchemaError
from .experiments import (
    continuous_dependence_study,
    contraction_measure,
    l1_bound_study,
    plasticity_limit_study,
)
from .gainfield import (
    GainField,
    PotentialSpec,
    build_learned_kernel,
    mercer_decompose,
    presynaptic_gain,
    schrodinger_cross_check,
    schrodinger_fd,
    simulate_gainfield,
)
from .io import fmt, output_lock, sha256_file, write_csv, write_json
from .model import compute_constants, contraction_factor, max_segment_length
from .solver import SolverConfig, monitor_bounds, solve_global
from .stationary import find_stationary_fp, stationary_via_flow

STUDY_NAMES = ("plasticity-limit", "dependence", "contraction", "l1")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _coordinate_header(grid: Grid):
    return ["x"] if grid.dimension == 1 else ["x", "y"]


def _write_field_csv(path, grid: Grid, values):
    header = _coordinate_header(grid) + ["u"]
    pts = grid.points
    rows = [list(pts[i]) + [values[i]] for i in range(grid.n_total)]
    write_csv(path, header, rows)


def _emit_manifest(out_dir, command, cfg: RunConfig | None, started, extra=None,
                   error=None, threads=1):
    manifest = {
        "command": command,
        "version": __version__,
        "wall_time_s": time.time() - started,
        "threads": threads,
    }
    if cfg is not None:
        constants = compute_constants(cfg.model, cfg.grid)
        rho = cfg.solver.segment_rho or max_segment_length(constants, cfg.model.gamma)
        manifest["config"] = cfg.document
        manifest["seed"] = cfg.seed
        manifest["constants"] = constants.to_json()
        manifest["rho"] = rho
        manifest["q"] = contraction_factor(constants, cfg.model.gamma, rho)
    if extra:
        manifest.update(extra)
    if error is not None:
        manifest["error"] = error
    checksums = {}
    for path in sorted(Path(out_dir).iterdir()):
        if path.name in ("manifest.json", ".lock") or path.suffix == ".tmp":
            continue
        checksums[path.name] = sha256_file(path)
    manifest["checksums"] = checksums
    write_json(Path(out_dir) / "manifest.json", manifest)


def _operator(cfg: RunConfig):
    return build_operator(cfg.model.kernel, cfg.grid, cfg.quadrature)


def cmd_simulate(cfg: RunConfig, out_dir, threads=1):
    op = _operator(cfg)
    u0 = initial_state(cfg)
    constants = compute_constants(cfg.model, cfg.grid)
    traj = solve_global(cfg.model, op, u0, cfg.solver, constants)
    report = monitor_bounds(traj, constants, cfg.model)

    coord_names = _coordinate_header(cfg.grid)
    pts = cfg.grid.points
    rows = []
    for n in range(len(traj)):
        t = traj.times[n]
        for i in range(cfg.grid.n_total):
            rows.append([t, i] + list(pts[i]) + [traj.values[n, i]])
    write_csv(Path(out_dir) / "trajectory.csv", ["t", "node_index"] + coord_names + ["u"], rows)

    sup_per_time = np.max(np.abs(traj.values), axis=1)
    min_per_time = np.min(traj.values, axis=1)
    bound_rows = [
        [traj.times[n], sup_per_time[n], report.bound_theoretical, min_per_time[n]]
        for n in range(len(traj))
    ]
    write_csv(Path(out_dir) / "bounds.csv", ["t", "sup_u", "bound", "min_u"], bound_rows)
    return {
        "bound_report": {
            "sup_observed": report.sup_observed,
            "bound": report.bound_theoretical,
            "within_bound": report.within_bound,
            "min_observed": report.min_observed,
            "positivity_applicable": report.positivity_applicable,
            "positivity_violations": report.positivity_violations,
        }
    }


def cmd_stationary(cfg: RunConfig, out_dir, method=None, threads=1):
    op = _operator(cfg)
    u0 = initial_state(cfg)
    section = cfg.stationary_section
    method = method or section["method"]
    if method == "fp":
        result = find_stationary_fp(cfg.model, op, u0, damping=section["damping"],
                                    tol=section["tol"], max_iter=section["max_iter"])
    else:
        result = stationary_via_flow(cfg.model, op, u0, t_max=section["t_max"],
                                     settle_tol=section["settle_tol"], dt=section["dt"])
    _write_field_csv(Path(out_dir) / "u_inf.csv", cfg.grid, result.u_inf)
    constants = compute_constants(cfg.model, cfg.grid)
    payload = {
        "method": result.method,
        "residual": result.residual_sup,
        "iterations": result.iterations,
        "converged": result.converged,
        # existence is only guaranteed for gamma * Cw < 1; surface the product
        "gamma_times_cw": cfg.model.gamma * constants.kernel_l1_sup,
    }
    write_json(Path(out_dir) / "stationary.json", payload)
    return {"stationary": payload}


def cmd_gainfield(cfg: RunConfig, out_dir, threads=1):
    op = _operator(cfg)
    u0 = initial_state(cfg)
    section = cfg.gainfield_section
    stat_section = cfg.stationary_section
    stationary = find_stationary_fp(cfg.model, op, u0, damping=stat_section["damping"],
                                    tol=stat_section["tol"], max_iter=stat_section["max_iter"])
    learned = build_learned_kernel(stationary.u_inf, cfg.model, cfg.grid, sign=section["sign"])
    eig = mercer_decompose(learned, cfg.quadrature)
    gain = presynaptic_gain(eig, k_pre=section["k_pre"])

    n_eigs = min(section["n_eigs"], eig.values.shape[0])
    write_csv(Path(out_dir) / "eigs.csv", ["i", "sigma_i"],
              [[i, eig.values[i]] for i in range(n_eigs)])
    write_csv(Path(out_dir) / "phi_pre.csv", _coordinate_header(cfg.grid) + ["phi"],
              [list(cfg.grid.points[i]) + [gain.phi_pre[i]]
               for i in range(cfg.grid.n_total)])

    lam = section["lambda"]
    box = section["crosscheck_box"]
    n_nodes = section["crosscheck_nodes"]
    cross_grid = Grid(bounds=[(-box, box)], npts=[n_nodes])
    cross_quad = make_quadrature(cross_grid, "trapezoid")
    report = schrodinger_cross_check(lam, section["half_width"], cross_grid, cross_quad)
    write_json(Path(out_dir) / "crosscheck.json", report.to_json())

    # exploratory only: frozen-gain run against the plastic run (the ordering
    # claim between them is unproved, so nothing here is asserted)
    probe_cfg = SolverConfig(method="exp-euler", dt=0.1, t_end=5.0)
    plastic = solve_global(cfg.model, op, u0, probe_cfg)
    gained = simulate_gainfield(op, GainField(gain.phi_pre, gain.k_pre),
                                cfg.model.firing, u0, probe_cfg)
    tail = slice(len(plastic.times) // 2, None)
    above = float(np.mean(gained.values[tail] > plastic.values[tail]))
    exploratory = {
        "sup_diff_gain_vs_plastic": float(np.max(np.abs(gained.values - plastic.values))),
        "fraction_gain_above_plastic_late": above,
    }
    return {
        "stationary_residual": stationary.residual_sup,
        "crosscheck": report.to_json(),
        "exploratory": exploratory,
    }


def cmd_schrodinger(cfg: RunConfig, out_dir, well=None, lam=None, threads=1):
    section = cfg.schrodinger_section
    half_width = section["half_width"]
    height = section["height"]
    if well is not None:
        try:
            half_width, height = (float(part) for part in well.split(","))
        except ValueError:
            raise SchemaError(["--well: expected 'half_width,height'"]) from None
    lam = lam if lam is not None else section["lambda"]
    grid = Grid(bounds=[(-section["box"], section["box"])], npts=[section["nodes"]])
    pot = PotentialSpec(shape="square-well", half_width=half_width, height=height)
    eig = schrodinger_fd(pot, grid, n_states=section["n_states"])
    write_csv(Path(out_dir) / "eigs.csv", ["i", "energy"],
              [[i, eig.values[i]] for i in range(eig.values.shape[0])])
    _write_field_csv(Path(out_dir) / "ground_state.csv", grid, eig.functions[:, 0])
    payload = {
        "half_width": half_width,
        "height": height,
        "energies": [float(e) for e in eig.values],
    }
    if lam is not None:
        payload["lambda"] = lam
        payload["base_gain_for_consistency"] = [float(e) + lam * lam for e in eig.values]
    write_json(Path(out_dir) / "schrodinger.json", payload)
    return {"schrodinger": payload}


def _study_initials(cfg: RunConfig, names):
    out = []
    for name in names:
        if name == "zero":
            out.append(("zero", initial_state(cfg, kind="zero", params={})))
        elif name == "step":
            out.append(("step", initial_state(cfg, kind="step", params={})))
        else:
            out.append(("initial", initial_state(cfg)))
    return out


def cmd_study(cfg: RunConfig, out_dir, study_name, threads=1):
    op = _operator(cfg)
    u0 = initial_state(cfg)
    section = cfg.study_section

    if study_name == "plasticity-limit":
        s = section["plasticity"]
        solver_cfg = SolverConfig(method=s["method"], dt=s["dt"], t_end=s["t_end"])
        result = plasticity_limit_study(cfg.model, op, s["gamma_list"], u0, s["t_end"],
                                        cfg=solver_cfg, slack=s["slack"], threads=threads)
        csv_name = "plasticity-limit.csv"
    elif study_name == "dependence":
        s = section["dependence"]
        result = continuous_dependence_study(cfg.model, op, u0, s["eps_list"],
                                             rho=s["rho"], dt=s["dt"],
                                             slack_coeff=s["slack_coeff"])
        csv_name = "dependence.csv"
    elif study_name == "contraction":
        s = section["contraction"]
        result = contraction_measure(cfg.model, op, rho=s["rho"], n_pairs=s["n_pairs"],
                                     seed=cfg.seed, time_steps=s["time_steps"],
                                     slack=s["slack"])
        csv_name = "contraction.csv"
    elif study_name == "l1":
        s = section["l1"]
        initials = _study_initials(cfg, s["initials"])
        solver_cfg = SolverConfig(method="exp-euler", dt=s["dt"], t_end=s["t_end"])
        model = cfg.model if s["gamma"] is None else replace(cfg.model, gamma=s["gamma"])
        result = l1_bound_study(model, op, initials, s["t_end"], cfg=solver_cfg,
                                slack=s["slack"], threads=threads)
        csv_name = "l1.csv"
    else:
        raise SchemaError([f"study: unknown study {study_name!r}"])

    if result.rows:
        header = list(result.rows[0].keys())
        write_csv(Path(out_dir) / csv_name, header,
                  [[("" if row[k] is None else row[k]) for k in header] for row in result.rows])
    verdict = {"pass": result.passed, "worst_margin": result.worst_margin}
    if result.fit and result.fit.get("slope") is not None:
        verdict["fitted_slope"] = result.fit["slope"]
        verdict["r2"] = result.fit.get("r2")
    if result.fit and "max_ratio" in (result.fit or {}):
        verdict["max_ratio"] = result.fit["max_ratio"]
        verdict["q"] = result.fit["q"]
    write_json(Path(out_dir) / "verdict.json", verdict)
    return {"verdict": verdict}


def cmd_constants(cfg: RunConfig, out_dir=None, threads=1):
    constants = compute_constants(cfg.model, cfg.grid)
    rho = cfg.solver.segment_rho or max_segment_length(constants, cfg.model.gamma)
    payload = {
        "constants": constants.to_json(),
        "gamma": cfg.model.gamma,
        "rho": rho,
        "q": contraction_factor(constants, cfg.model.gamma, rho),
    }
    for key, value in payload["constants"].items():
        print(f"{key}: {value if isinstance(value, str) else fmt(float(value))}")
    print(f"rho: {fmt(payload['rho'])}")
    print(f"q: {fmt(payload['q'])}")
    if out_dir is not None:
        write_json(Path(out_dir) / "constants.json", payload)
    return {"constants_report": payload}


def run(command: str, cfg: RunConfig, out_dir, study_name=None, threads=1, **kwargs) -> int:
    """Dispatch a validated config; always writes a manifest when out_dir is set."""
    started = time.time()
    with output_lock(out_dir) as out:
        try:
            if command == "simulate":
                extra = cmd_simulate(cfg, out, threads=threads)
            elif command == "stationary":
                extra = cmd_stationary(cfg, out, method=kwargs.get("method"), threads=threads)
            elif command == "gainfield":
                extra = cmd_gainfield(cfg, out, threads=threads)
            elif command == "schrodinger":
                extra = cmd_schrodinger(cfg, out, well=kwargs.get("well"),
                                        lam=kwargs.get("lam"), threads=threads)
            elif command == "study":
                extra = cmd_study(cfg, out, study_name, threads=threads)
            elif command == "constants":
                extra = cmd_constants(cfg, out, threads=threads)
            else:
                raise ValueError(f"unknown command {command!r}")
        except SchemaError as exc:
            _emit_manifest(out, command, cfg, started,
                           error={"type": "SchemaError", "violations": exc.violations},
                           threads=threads)
            for violation in exc.violations:
                print(f"config error: {violation}", file=sys.stderr)
            return EXIT_CONFIG
        except (NeuralFieldError, FloatingPointError, ValueError, RuntimeError) as exc:
            _emit_manifest(out, command, cfg, started,
                           error={"type": type(exc).__name__, "message": str(exc)},
                           threads=threads)
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        _emit_manifest(out, command, cfg, started, extra=extra, threads=threads)
        verdict = (extra or {}).get("verdict")
        if verdict is not None and not verdict["pass"]:
            print("study verdict: FAIL (measured exceeded bound + slack)", file=sys.stderr)
            return EXIT_NUMERICAL
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuralfield",
                                     description="Neural field simulation and bound verification")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    common.add_argument("--out", help="output directory (required for artifact commands)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent study rows")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate the field equation")
    stat = sub.add_parser("stationary", parents=[common], help="solve for a stationary state")
    stat.add_argument("--method", choices=("fp", "flow"), help="override the config method")
    sub.add_parser("gainfield", parents=[common],
                   help="learned kernel, spectral split, gain field, cross-check")
    sch = sub.add_parser("schrodinger", parents=[common], help="standalone eigensolver")
    sch.add_argument("--well", help="square well as 'half_width,height'")
    sch.add_argument("--lambda", dest="lam", type=float, help="kernel decay rate")
    study = sub.add_parser("study", parents=[common], help="run a verification study")
    study.add_argument("name", choices=STUDY_NAMES)
    sub.add_parser("constants", parents=[common], help="print the model constants")
    sub.add_parser("validate", parents=[common], help="validate a config file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    try:
        if args.config is not None:
            cfg = parse_config(args.config)
        else:
            cfg = build_config({})
    except (ParseError, SchemaError) as exc:
        if isinstance(exc, SchemaError):
            for violation in exc.violations:
                print(f"config error: {violation}", file=sys.stderr)
        else:
            print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        cfg.document["seed"] = args.seed
        cfg = build_config(cfg.document)

    if args.command == "validate":
        print("config ok")
        return EXIT_OK

    if args.command == "constants" and args.out is None:
        try:
            cmd_constants(cfg, out_dir=None)
        except (NeuralFieldError, ValueError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        return EXIT_OK

    if args.out is None:
        print("error: --out is required for this command", file=sys.stderr)
        return EXIT_CONFIG

    kwargs = {}
    if args.command == "stationary":
        kwargs["method"] = args.method
    if args.command == "schrodinger":
        kwargs["well"] = args.well
        kwargs["lam"] = args.lam
    study_name = args.name if args.command == "study" else None
    try:
        return run(args.command, cfg, args.out, study_name=study_name,
                   threads=args.threads, **kwargs)
    except RuntimeError as exc:
        # lock contention surfaces here, before any manifest can exist
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
