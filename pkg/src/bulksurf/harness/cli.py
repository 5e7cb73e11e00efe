"""Command-line interface.

Subcommands: ``simulate`` (full coupled run with CSV diagnostics, a
radius-history figure and optional VTK snapshots), ``converge``
(refinement studies, CSV + convergence figure), ``fracnorm-check``
(fractional-norm property battery, CSV + figure + pass/fail lines) and
``mesh-info``.  A JSON config file supplies any subset of the same
options; explicit command-line flags win.  Exit codes: 0 success,
1 validation/usage error, 2 runtime failure (solver or quality abort,
failed checks).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..mesh import build_ball_mesh, quality_report
from ..solver import (StepperConfig, run, constant_source, QualityAbort,
                      LinearSolveError)
from .oracles import RadialOracle
from .studies import convergence_study, fracnorm_check
from .reportio import write_csv
from .vtkio import write_state_vtk
from . import figures


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems via exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


_SIMULATE_DEFAULTS = {
    "alpha": 1.0, "beta": 1.0, "q_const": 0.0, "r0": 1.0, "degree": 2,
    "level": 1, "tau": None, "t_end": 0.1, "out_dir": "out", "vtk_every": 0,
    "scheme": "semi_implicit", "velocity_normal": "post",
    "solver_tol": 1e-11, "min_radius_ratio": 0.05, "min_jacobian": 1e-12,
    "normal_drift_budget": 0.05, "quadrature_order": None,
}
_CONVERGE_DEFAULTS = {
    "experiment": "robin", "degree": 2, "levels": 3, "out": "converge.csv",
    "alpha": 1.0, "beta": 1.0, "q_const": 0.2, "r0": 1.0, "t_end": 0.5,
    "tau0": 4e-3, "tau_scaling": "h", "scheme": "semi_implicit",
    "normal_drift_budget": 0.05,
}
_FRACNORM_DEFAULTS = {
    "levels": 4, "out": "fracnorm.csv", "degree": 1, "n_random": 100,
    "n_equiv": 50, "equiv_degree": 2, "seed": 20240817, "n_quad": 64,
}
_MESHINFO_DEFAULTS = {"level": 0, "degree": 1}


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="JSON file with the same option names; "
                             "flags given here override it")

    parser = _Parser(prog="bulksurf",
                     description="Bulk-surface finite element runs and studies")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common],
                       help="run the coupled evolving-ball model")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--q-const", dest="q_const", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--level", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--out-dir", dest="out_dir", type=str)
    p.add_argument("--vtk-every", dest="vtk_every", type=int)

    p = sub.add_parser("converge", parents=[common],
                       help="refinement study (robin or flow)")
    p.add_argument("--experiment", choices=("robin", "flow"))
    p.add_argument("--degree", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--out", type=str)

    p = sub.add_parser("fracnorm-check", parents=[common],
                       help="fractional-norm property battery")
    p.add_argument("--levels", type=int)
    p.add_argument("--out", type=str)

    p = sub.add_parser("mesh-info", parents=[common],
                       help="print mesh sizes and quality for a level/degree")
    p.add_argument("--level", type=int)
    p.add_argument("--degree", type=int)
    return parser


def _merge_options(ns, defaults):
    """defaults <- JSON config <- explicit flags; unknown keys rejected."""
    merged = dict(defaults)
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise _UsageError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise _UsageError(f"config file is not valid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise _UsageError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - set(defaults))
        if unknown:
            raise _UsageError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(cfg)
    for key in defaults:
        value = getattr(ns, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _validate_mesh_args(opts):
    if not 1 <= int(opts["degree"]) <= 3:
        raise _UsageError("--degree must be 1, 2 or 3")


def _cmd_simulate(ns):
    opts = _merge_options(ns, _SIMULATE_DEFAULTS)
    _validate_mesh_args(opts)
    if opts["tau"] is None:
        raise _UsageError("simulate requires a time step: pass --tau "
                          "(or set 'tau' in the config file)")
    if int(opts["level"]) < 0:
        raise _UsageError("--level must be nonnegative")
    out_dir = opts["out_dir"]
    os.makedirs(out_dir, exist_ok=True)

    mesh = build_ball_mesh(float(opts["r0"]), int(opts["level"]),
                           int(opts["degree"]))
    vtk_every = int(opts["vtk_every"])
    try:
        config = StepperConfig(
            alpha=float(opts["alpha"]), beta=float(opts["beta"]),
            tau=float(opts["tau"]), t_end=float(opts["t_end"]),
            scheme=opts["scheme"], velocity_normal=opts["velocity_normal"],
            quadrature_order=opts["quadrature_order"],
            solver_tol=float(opts["solver_tol"]),
            min_radius_ratio=float(opts["min_radius_ratio"]),
            min_jacobian=float(opts["min_jacobian"]),
            normal_drift_budget=float(opts["normal_drift_budget"]),
            store_states="all" if vtk_every > 0 else "ends",
        )
    except ValueError as exc:
        raise _UsageError(str(exc))

    traj = run(mesh, config, constant_source(float(opts["q_const"])))

    diag = traj.diagnostics
    header = ["t", "mean_radius", "normal_drift", "min_jacobian",
              "min_radius_ratio"]
    rows = list(zip(*(diag[k] for k in header)))
    write_csv((header, rows), os.path.join(out_dir, "diagnostics.csv"))
    oracle = RadialOracle(q_const=float(opts["q_const"]), r0=float(opts["r0"]))
    figures.plot_radius_history(diag["t"], diag["mean_radius"], oracle,
                                os.path.join(out_dir, "radius.png"))

    if vtk_every > 0:
        snap = mesh.copy()
        picks = list(range(0, len(traj.states), vtk_every))
        if picks[-1] != len(traj.states) - 1:
            picks.append(len(traj.states) - 1)
        for i in picks:
            state = traj.states[i]
            snap.move_nodes(state.x)
            write_state_vtk(snap, state,
                            os.path.join(out_dir, f"state_{i:05d}.vtk"))

    print(f"steps: {len(diag['t']) - 1}")
    print(f"final time: {diag['t'][-1]:.17g}")
    print(f"final mean radius: {diag['mean_radius'][-1]:.17g}")
    print(f"exact radius: {oracle.radius(diag['t'][-1]):.17g}")
    print(f"max normal drift: {max(diag['normal_drift']):.3e}")
    if traj.failure is not None:
        print(f"aborted: {traj.failure}", file=sys.stderr)
        return 2
    return 0


def _figure_path(out, suffix=".png"):
    stem, ext = os.path.splitext(out)
    return (stem if ext else out) + suffix


def _cmd_converge(ns):
    opts = _merge_options(ns, _CONVERGE_DEFAULTS)
    _validate_mesh_args(opts)
    n_levels = int(opts["levels"])
    if n_levels < 3:
        raise _UsageError("--levels must be at least 3")
    if opts["experiment"] == "robin":
        levels = tuple(range(1, n_levels + 1))
    elif opts["experiment"] == "flow":
        # level 0 transports the normal field with O(1) error and always
        # trips the drift monitor; sweeps start one level up, like robin
        levels = tuple(range(1, n_levels + 1))
    else:
        raise _UsageError(f"unknown experiment {opts['experiment']!r}")
    study_cfg = {k: opts[k] for k in
                 ("experiment", "degree", "alpha", "beta", "q_const", "r0",
                  "t_end", "tau0", "tau_scaling", "scheme",
                  "normal_drift_budget")
                 if k in opts}
    if opts["experiment"] == "robin":
        study_cfg = {k: study_cfg[k] for k in
                     ("experiment", "degree", "alpha", "beta")}
    report = convergence_study(study_cfg, levels)

    out = opts["out"]
    out_parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(out_parent, exist_ok=True)
    write_csv(report, out)
    figures.plot_convergence(report, _figure_path(out))

    header, rows = report.table()
    print(",".join(header))
    for row in rows:
        print(",".join(str(v) for v in row))
    key = report.error_keys[1] if len(report.error_keys) > 1 else report.error_keys[0]
    rates = report.eoc(key)
    if len(rates) > 1:
        print(f"final EOC ({key}): {rates[-1]:.3f}")
    if report.aborted is not None:
        print(f"aborted: {report.aborted}", file=sys.stderr)
        return 2
    return 0


def _cmd_fracnorm(ns):
    opts = _merge_options(ns, _FRACNORM_DEFAULTS)
    n_levels = int(opts["levels"])
    if n_levels < 2:
        raise _UsageError("--levels must be at least 2")
    report = fracnorm_check(levels=tuple(range(n_levels)),
                            degree=int(opts["degree"]),
                            n_random=int(opts["n_random"]),
                            n_equiv=int(opts["n_equiv"]),
                            equiv_degree=int(opts["equiv_degree"]),
                            seed=int(opts["seed"]),
                            n_quad=int(opts["n_quad"]))
    out = opts["out"]
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_csv(report, out)
    figures.plot_fracnorm(report, _figure_path(out))
    for line in report.check_lines():
        print(line)
    return 0 if report.passed else 2


def _cmd_mesh_info(ns):
    opts = _merge_options(ns, _MESHINFO_DEFAULTS)
    _validate_mesh_args(opts)
    mesh = build_ball_mesh(1.0, int(opts["level"]), int(opts["degree"]))
    q = quality_report(mesh)
    print(f"N = {mesh.n_nodes}")
    print(f"N_Gamma = {mesh.n_surface}")
    print(f"elements = {mesh.n_elements}")
    print(f"boundary_faces = {mesh.n_faces}")
    print(f"h = {q.h:.17g}")
    print(f"min_radius_ratio = {q.min_radius_ratio:.17g}")
    print(f"min_jacobian = {q.min_jacobian:.17g}")
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise _UsageError(parser.format_usage())
        handler = {"simulate": _cmd_simulate, "converge": _cmd_converge,
                   "fracnorm-check": _cmd_fracnorm,
                   "mesh-info": _cmd_mesh_info}[ns.command]
        return handler(ns)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (QualityAbort, LinearSolveError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    sys.exit(cli_main())
