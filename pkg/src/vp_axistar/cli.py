"""Command-line entry point.

Subcommands: solve-spherical, continue, diagnose, export-plots.  Every
command writes a machine-readable manifest naming any failed invariant;
exit codes: 0 all checks pass, 1 numerical or check failure, 2 invalid
configuration or arguments.  VP_AXISTAR_THREADS caps worker parallelism
(orbit batches); runs with identical config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig


def worker_count() -> int:
    raw = os.environ.get("VP_AXISTAR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(v, ".17g") for v in row])


def _load_config(args) -> RunConfig:
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {
        "mu": args.mu,
        "gamma_max": getattr(args, "gamma_max", None),
        "gamma_steps": getattr(args, "gamma_steps", None),
        "newton_tol": args.tol,
        "seed": args.seed,
        "out_dir": args.out,
    }
    if getattr(args, "psi", None):
        overrides["psi_kind"] = args.psi
        if args.psi == "even-gaussian":
            overrides["psi_params"] = {"a": 1.0}
        elif args.psi == "skewed-rational":
            overrides["psi_params"] = {"b": 0.5}
    return config.with_overrides(**overrides)


def cmd_solve_spherical(args) -> int:
    from .spherical import radial_state_report, solve_base_state

    config = _load_config(args)
    out = Path(config.out_dir)
    state = solve_base_state(config.mu, nr=config.nr, tol=config.base_tol)
    report = radial_state_report(state)
    state.save(out)
    failures = sorted(k for k, v in report.items() if not v["passed"])
    _write_json(
        out / "report.json",
        {
            "schema": "vp-axistar/1",
            "kind": "base-state-report",
            "config": config.resolved(),
            "checks": report,
            "failures": failures,
            "passed": not failures,
        },
    )
    print(f"base state mu={config.mu}: mass={state.mass:.12g} e0={state.e0:.12g}")
    for name, entry in sorted(report.items()):
        print(f"  [{'PASS' if entry['passed'] else 'FAIL'}] {name}: {entry['value']:.3e}")
    return 0 if not failures else 1


def cmd_continue(args) -> int:
    from .model import assemble, export_state, quadrupole_fraction, velocity_moments
    from .operators import DeformationOperator
    from .spherical import solve_base_state

    config = _load_config(args)
    out = Path(config.out_dir)
    base = solve_base_state(config.mu, nr=config.nr, tol=config.base_tol)
    profiles = config.make_profiles(base.e0)
    operator = DeformationOperator(
        base,
        profiles,
        max_degree=config.max_degree,
        n_radial=config.nr_c,
        polar_nodes=config.polar_nodes,
    )
    result = operator.continue_in_gamma(
        config.gamma_max,
        config.gamma_steps,
        tol=config.newton_tol,
        max_iter=config.newton_max_iter,
        measure_gamma_slope=True,
    )
    steps_meta = []
    all_passed = True
    for i, step in enumerate(result.steps):
        state = assemble(
            step.gamma,
            step.field,
            base,
            profiles,
            max_degree=config.max_degree,
            polar_nodes=config.polar_nodes,
        )
        state_dir = out / f"state_{i:04d}"
        export_state(state, state_dir)
        all_passed &= state.passed()
        max_current = velocity_moments(state).max_magnitude()
        steps_meta.append(
            {
                "index": i,
                "gamma": step.gamma,
                "iterations": step.iterations,
                "residual": step.residual,
                "x_norm": step.x_norm,
                "quadrupole_fraction": quadrupole_fraction(state),
                "max_current": max_current,
                "current_is_zero": bool(max_current <= 1e-12),
                "invariants_passed": state.passed(),
                "directory": state_dir.name,
            }
        )
    manifest = {
        "schema": "vp-axistar/1",
        "kind": "continuation-run",
        "config": config.resolved(),
        "steps": steps_meta,
        "reached_gamma": result.reached_gamma,
        "truncated": result.truncated,
        "failure_reason": result.failure_reason,
        "sector_norms": {str(k): v for k, v in result.sector_norms.items()},
        "sector_min_singular": {
            str(k): v for k, v in result.sector_min_singular.items()
        },
        "dzeta_dgamma": result.dzeta_dgamma,
        "all_invariants_passed": all_passed,
    }
    _write_json(out / "run.json", manifest)
    if not result.steps:
        print(f"continuation failed before the first step: {result.failure_reason}")
        return 1
    flag = " (truncated)" if result.truncated else ""
    print(
        f"continuation reached gamma={result.reached_gamma:.6g} in "
        f"{len(result.steps) - 1} steps{flag}"
    )
    for meta in steps_meta:
        print(
            f"  gamma={meta['gamma']:.6g}: iters={meta['iterations']} "
            f"residual={meta['residual']:.2e} |zeta|_X={meta['x_norm']:.3e}"
        )
    return 0 if all_passed else 1


def cmd_diagnose(args) -> int:
    from .model import (
        load_state,
        poisson_residual,
        quadrupole_fraction,
        stationarity_check,
        velocity_moments,
    )
    from .operators import DeformationOperator

    state_dir = Path(args.state_dir)
    if not (state_dir / "manifest.json").exists():
        print(f"no state manifest found in {state_dir}", file=sys.stderr)
        return 2
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    state = load_state(state_dir)

    checks: dict = {}

    def record(name, value, tol):
        checks[name] = {
            "value": float(value),
            "tol": float(tol),
            "passed": bool(value <= tol),
        }

    # field consistency: the stored density must satisfy rho = h(gamma, r, U)
    mesh, basis = state.density.mesh, state.density.basis
    r = mesh.nodes[:, None]
    c = basis.nodes[None, :]
    rcyl = r * np.sqrt(1.0 - c**2)
    pts = np.stack([rcyl.ravel(), np.zeros(rcyl.size), (r * c).ravel()], axis=1)
    u = state.u_eval(pts).reshape(rcyl.shape)
    h_of_u = state.profiles.h_eval(state.gamma, rcyl, u)
    scale = max(state.density.values.max(), 1e-300)
    record(
        "poisson_field_consistency",
        np.abs(state.density.values - h_of_u).max() / scale,
        5e-4,
    )
    record("poisson_residual", poisson_residual(state), 1e-4)

    # stored potential table against one recomputed from the stored density
    stored = np.loadtxt(state_dir / "u_moments.csv", delimiter=",", skiprows=1)
    rt = stored[:, 0]
    recomputed = state.potential.sector_values(rt)
    record(
        "potential_table_consistency",
        max(
            np.abs(stored[:, 1 + k] - recomputed[k]).max()
            for k in range(len(state.potential.degrees))
        ),
        1e-10,
    )

    record("reflection_symmetry", state.density.odd_moment_fraction(), 1e-10)
    record("moment_consistency", state.density.reconstruction_error(), 1e-10)

    exterior = state.report.get("exterior_above_cutoff")
    if exterior is not None:
        record("exterior_above_cutoff", exterior["value"], exterior["tol"])

    quad = quadrupole_fraction(state)
    if state.gamma == 0.0:
        record("sphericity_at_gamma_zero", quad, 1e-10)
    else:
        record("non_sphericity", 1e-8 - quad, 0.0)

    current = velocity_moments(state)
    if state.profiles.rotation.is_even:
        record("static_current", current.max_magnitude(), 1e-12)

    operator = DeformationOperator(
        state.base,
        state.profiles,
        max_degree=state.potential.max_degree,
        n_radial=state.deformation.n_radial,
        polar_nodes=basis.node_count,
    )
    norms = operator.sector_norms()
    sector_table = []
    for l in operator.degrees:
        l = int(l)
        bound = 3.0 / (2 * l + 1) + 0.02
        sector_table.append({"l": l, "norm": norms[l], "bound": bound})
        if l >= 2:
            record(f"sector_norm_l{l}", norms[l], bound)
    for l, sval in operator.sector_min_singular().items():
        record(f"sector_invertible_l{l}", 1e-3 - sval, 0.0)

    orbits = stationarity_check(
        state, n_orbits=config.n_orbits, seed=config.seed, threads=worker_count()
    )
    record("orbit_momentum_drift", orbits.momentum_drift.max(), 1e-10)
    record("orbit_f_drift", orbits.f_drift.max(), 1e-6)

    out = Path(args.out) if args.out else state_dir / "diagnostics"
    failures = sorted(k for k, v in checks.items() if not v["passed"])
    _write_json(
        out / "report.json",
        {
            "schema": "vp-axistar/1",
            "kind": "diagnostic-report",
            "state": str(state_dir),
            "gamma": state.gamma,
            "checks": checks,
            "sector_norms": sector_table,
            "orbit_summary": orbits.summary(),
            "failures": failures,
            "passed": not failures,
        },
    )
    _write_csv(
        out / "sector_norms.csv",
        ["l", "norm", "bound"],
        ((row["l"], row["norm"], row["bound"]) for row in sector_table),
    )
    _write_csv(
        out / "orbit_drifts.csv",
        ["orbit", "energy_drift", "momentum_drift", "f_drift", "escaped"],
        (
            (float(i), orbits.energy_drift[i], orbits.momentum_drift[i],
             orbits.f_drift[i], float(orbits.escaped[i]))
            for i in range(orbits.energy_drift.size)
        ),
    )
    for name, entry in sorted(checks.items()):
        print(f"  [{'PASS' if entry['passed'] else 'FAIL'}] {name}: {entry['value']:.3e}")
    return 0 if not failures else 1


def cmd_export_plots(args) -> int:
    from .model import load_state

    state_dir = Path(args.state_dir)
    if not (state_dir / "manifest.json").exists():
        print(f"no state manifest found in {state_dir}", file=sys.stderr)
        return 2
    state = load_state(state_dir)
    out = Path(args.out) if args.out else state_dir / "plots"
    mesh, basis = state.density.mesh, state.density.basis

    r = mesh.nodes
    theta = np.arccos(np.clip(basis.nodes, -1.0, 1.0))
    order = np.argsort(theta)
    _write_csv(
        out / "density_rtheta.csv",
        ["r", "theta", "rho"],
        (
            (r[i], theta[j], state.density.values[i, j])
            for i in range(r.size)
            for j in order
        ),
    )
    pts = np.stack(
        [
            (r[:, None] * np.sin(theta)[None, :]).ravel(),
            np.zeros(r.size * theta.size),
            (r[:, None] * np.cos(theta)[None, :]).ravel(),
        ],
        axis=1,
    )
    u = state.u_eval(pts).reshape(r.size, theta.size)
    _write_csv(
        out / "potential_rtheta.csv",
        ["r", "theta", "u"],
        ((r[i], theta[j], u[i, j]) for i in range(r.size) for j in order),
    )

    cut_r = np.linspace(0.0, 1.6, 321)
    for name, cz in (("equatorial", 0.0), ("polar", 1.0)):
        direction = np.array([np.sqrt(1.0 - cz**2), 0.0, cz])
        pts = cut_r[:, None] * direction[None, :]
        # density along the cut from the full discrete polar spectrum
        line_nodal = state.density.basis.evaluate(
            state.density.moments, np.array([cz])
        )[:, 0]
        rho_line = mesh.interp_matrix(cut_r) @ line_nodal
        _write_csv(
            out / f"cut_{name}.csv",
            ["r", "rho", "u"],
            zip(cut_r, rho_line, state.u_eval(pts)),
        )
    _write_csv(
        out / "support_boundary.csv",
        ["theta", "r_boundary"],
        zip(state.boundary_theta, state.boundary_radius),
    )
    print(f"plot tables written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vp-axistar",
        description=(
            "Axially symmetric steady states of the gravitational "
            "Vlasov-Poisson system by Newton continuation on a deformation "
            "operator"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gamma=False):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--mu", type=float, default=None, help="polytrope exponent")
        p.add_argument("--tol", type=float, default=None, help="Newton tolerance")
        p.add_argument("--seed", type=int, default=None, help="diagnostic RNG seed")
        if gamma:
            p.add_argument("--gamma-max", dest="gamma_max", type=float, default=None)
            p.add_argument("--gamma-steps", dest="gamma_steps", type=int, default=None)
            p.add_argument(
                "--psi",
                type=str,
                default=None,
                choices=["even-gaussian", "skewed-rational"],
            )

    p = sub.add_parser("solve-spherical", help="solve and export the base state")
    common(p)
    p.set_defaults(func=cmd_solve_spherical)

    p = sub.add_parser("continue", help="trace the one-parameter family in gamma")
    common(p, gamma=True)
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("diagnose", help="run the invariant suite on an exported state")
    p.add_argument("state_dir", type=str)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("export-plots", help="write plot-ready CSV tables")
    p.add_argument("state_dir", type=str)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
