"""Command-line entry point: ``nlkelvin <command> --config FILE [--out DIR]``.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import RunConfig, load_config
from .design import OptimizerError, optimize_design
from .experiments import SweepSettings, SweepRecord, delta_sweep, make_operators
from .fields import write_field_csv, write_table_csv
from .geometry import build_mesh, build_pairs
from .kernel import ConfigurationError, KernelSpec
from .local import LocalGrid, optimize_local_design, solve_local
from .material import DesignField, check_admissible
from .operators import StructureError, build_operators
from .solvers import (SolverError, infsup_constant, make_source, poincare_constant, solve_kelvin,
                      solve_primal, stability_ratio)

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 64

COMMANDS = ("solve", "solve-dual", "solve-local", "optimize", "optimize-local", "sweep", "infsup", "validate")

log = logging.getLogger("nlkelvin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlkelvin", description="Nonlocal optimal design of scalar diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (INI)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        if name == "solve":
            p.add_argument("--dual", action="store_true", help="also solve the Kelvin (flux) problem")
    return parser


def _setup(cfg: RunConfig, delta=None):
    delta = cfg.delta if delta is None else delta
    if delta is None:
        raise ConfigurationError("kernel.delta: required for this command")
    mesh = build_mesh(cfg.domain, cfg.mesh_h(delta), delta)
    ops = build_operators(mesh, build_pairs(mesh, KernelSpec.make(cfg.family, delta, cfg.domain.dim)))
    f = make_source(mesh, **cfg.source)
    return ops, f


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def cmd_solve(cfg, out, dual=False):
    ops, f = _setup(cfg)
    design = DesignField.uniform(ops.mesh, cfg.bounds)
    if dual:
        sol = solve_kelvin(design, f, cfg.scheme, ops, method=cfg.method, tol=cfg.tol)
        summary = {"I_primal": sol.energy_primal, "I_dual": sol.energy_dual, "gap": sol.duality_gap,
                   "stability_ratio": stability_ratio(sol, f, ops)}
        write_field_csv(os.path.join(out, "flux.csv"), ops.mesh, ops.flux_recovery(sol.q))
    else:
        sol = solve_primal(design, f, cfg.scheme, ops, method=cfg.method, tol=cfg.tol)
        summary = {"I_primal": sol.energy_primal, "I_dual": None, "gap": None, "stability_ratio": None}
    summary["residuals"] = sol.residuals
    summary["infsup"] = infsup_constant(ops)
    write_field_csv(os.path.join(out, "u.csv"), ops.mesh, sol.u)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_solve_local(cfg, out):
    ops, f = _setup(cfg)
    grid = LocalGrid.from_mesh(ops.mesh)
    sol = solve_local(np.full(grid.n_cells, cfg.bounds.gamma), f, grid, method=cfg.method, tol=cfg.tol)
    summary = {"I_primal": sol.energy_primal, "I_dual": sol.energy_dual,
               "gap": abs(sol.energy_primal + sol.energy_dual) / max(1.0, abs(sol.energy_primal)),
               "residuals": sol.residuals}
    write_field_csv(os.path.join(out, "u.csv"), ops.mesh, sol.u)
    write_field_csv(os.path.join(out, "flux.csv"), ops.mesh, sol.flux)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_optimize(cfg, out):
    ops, f = _setup(cfg)
    res = optimize_design(f, ops, cfg.bounds, max_iters=cfg.max_iters, rel_tol=cfg.rel_tol, method=cfg.method)
    summary = {"d_delta": res.d_value, "p_delta": res.p_value, "iters": res.iterations,
               "converged": res.converged, "volume_slack": res.volume_slack}
    write_field_csv(os.path.join(out, "kappa.csv"), ops.mesh, res.design.kappa)
    write_field_csv(os.path.join(out, "flux.csv"), ops.mesh, ops.flux_recovery(res.flux))
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_optimize_local(cfg, out):
    ops, f = _setup(cfg)
    grid = LocalGrid.from_mesh(ops.mesh)
    res = optimize_local_design(f, grid, cfg.bounds, max_iters=max(cfg.max_iters, 500), rel_tol=cfg.rel_tol,
                                method=cfg.method)
    slack = cfg.bounds.gamma * grid.measure - float(np.sum(res.kappa)) * grid.hn
    summary = {"d_star": res.d_star, "iters": res.iterations, "converged": res.converged, "volume_slack": slack}
    write_field_csv(os.path.join(out, "kappa.csv"), ops.mesh, res.kappa)
    write_field_csv(os.path.join(out, "flux.csv"), ops.mesh, res.solution.flux)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_infsup(cfg, out):
    deltas = cfg.delta_list or (cfg.delta,)
    rows = []
    for d in deltas:
        ops, _ = _setup(cfg, d)
        rows.append({"delta": d, "h": ops.mesh.h, "infsup": infsup_constant(ops),
                     "poincare_const": poincare_constant(ops)})
    summary = {"records": rows}
    if len(rows) > 1:
        vals = [r["infsup"] for r in rows]
        summary["min_over_max"] = min(vals) / max(vals)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_sweep(cfg, out):
    if not cfg.delta_list:
        raise ConfigurationError("kernel.delta_list: required for sweep")
    settings = SweepSettings(
        delta_list=cfg.delta_list, domain=cfg.domain, m=cfg.m, family=cfg.family.value, bounds=cfg.bounds,
        source=lambda mesh: make_source(mesh, **cfg.source), max_iters=cfg.max_iters, rel_tol=cfg.rel_tol,
        method=cfg.method)
    result = delta_sweep(settings)
    write_table_csv(os.path.join(out, "sweep.csv"), SweepRecord.header(), [r.row() for r in result.records])
    summary = result.summary()
    _write_json(os.path.join(out, "summary.json"), summary)
    if not result.complete:
        raise SolverError(f"sweep aborted: {result.error}")
    return summary


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nlkelvin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"nlkelvin: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as exc:
        print(f"nlkelvin: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        sys.stdout.write(cfg.resolved_text())
        return EXIT_OK

    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.resolved.ini"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.resolved_text())
    handlers = {
        "solve": lambda: cmd_solve(cfg, out, dual=args.dual),
        "solve-dual": lambda: cmd_solve(cfg, out, dual=True),
        "solve-local": lambda: cmd_solve_local(cfg, out),
        "optimize": lambda: cmd_optimize(cfg, out),
        "optimize-local": lambda: cmd_optimize_local(cfg, out),
        "sweep": lambda: cmd_sweep(cfg, out),
        "infsup": lambda: cmd_infsup(cfg, out),
    }
    try:
        summary = handlers[args.command]()
    except ConfigurationError as exc:
        print(f"nlkelvin: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, OptimizerError, StructureError) as exc:
        print(f"nlkelvin: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
