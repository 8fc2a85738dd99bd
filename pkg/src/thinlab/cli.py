"""Command-line front end.

Five subcommands cover the package's workflows:

* capacity  -- capacity ladder of a shape, with extrapolation.
* ergodic   -- empirical means and weak-star integrals of a lattice field.
* solve     -- one constrained or penalized problem on a weighted box.
* study     -- the full multi-level convergence study (CSV + JSON).
* regimes   -- the three scaling regimes plus the limit-energy sandwich.

Each subcommand accepts --config (a JSON file; omitted means a built-in
desk-scale preset), --seed, --threads, --out, and
--single-thread-deterministic, which forces one thread and zeroes
wall-clock columns so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .capacity import capacity_record, global_capacity
from .grids import GridSpec, save_field_csv
from .lab import (ConvergenceReport, default_regime_plan, default_study_plan,
                  emit_report, make_data_function, plan_from_dict,
                  run_convergence_study, run_regime_suite)
from .shapes import shape_from_dict
from .solvers import (BoundaryCondition, LimitProblem, ObstacleProblem,
                      solve_eps_problem, solve_limit_problem)
from .stochastic import (ProcessSpec, Realization, cells_inside,
                         empirical_mean, iid_uniform, weak_star_test)

__all__ = ["main"]


def _load_config(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path) as fh:
        return json.load(fh)


def _write_json(obj, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "infinity"
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {obj!r}")


# -- capacity ----------------------------------------------------------------

def _cmd_capacity(args) -> int:
    cfg = _load_config(args.config) or {
        "shape": {"kind": "interval", "center": [0.0], "radius": 0.5},
        "a": 0.5, "p": 2.0, "dimension": 2, "h_levels": 2,
    }
    shape = shape_from_dict(cfg["shape"])
    result = global_capacity(
        shape,
        n0=cfg.get("n0"),
        resolution=cfg.get("resolution"),
        a=float(cfg.get("a", 0.0)),
        p=float(cfg.get("p", 2.0)),
        dimension=cfg.get("dimension"),
        h_levels=int(cfg.get("h_levels", 2)),
    )
    record = capacity_record(result, shape=shape)
    path = _write_json(record, args.out or "out", "capacity.json")
    for n, v in zip(record["n_ladder"], record["values"]):
        print(f"n = {n:<8g} capacity = {v:.8g}")
    print(f"extrapolated capacity = {result.extrapolated:.8g}")
    if result.flags:
        print(f"flags: {', '.join(result.flags)}")
    print(f"wrote {path}")
    return 0


# -- ergodic -----------------------------------------------------------------

def _default_ergodic_config(seed: int) -> dict:
    return {
        "process": iid_uniform(0.0, 1.0, seed=seed).to_dict(),
        "V": [[0.0, 1.0], [0.0, 1.0]],
        "levels": [3, 4, 5, 6],
        "realizations": 4,
        "cubes": [[[0.25, 0.75], [0.25, 0.75]]],
    }


def _cmd_ergodic(args) -> int:
    seed = args.seed if args.seed is not None else 0
    cfg = _load_config(args.config) or _default_ergodic_config(seed)
    process = ProcessSpec.from_dict(cfg["process"])
    if args.seed is not None:
        process = replace(process, seed=args.seed)
    box = [tuple(b) for b in cfg["V"]]
    cubes = [tuple(tuple(b) for b in q) for q in cfg.get("cubes", [])]
    out = {"process": process.to_dict(), "V": cfg["V"], "levels": []}
    for j in cfg["levels"]:
        eps = 2.0 ** (-j)
        window = cells_inside(box, eps)
        n_cells = int(np.prod([hi - lo for lo, hi in window]))
        means = [empirical_mean(process, box, j, Realization(omega_id=w))
                 for w in range(int(cfg.get("realizations", 1)))]
        cube_rows = []
        for q in cubes:
            area = float(np.prod([hi - lo for lo, hi in q]))
            vals = [weak_star_test(process, box, j, Realization(omega_id=w), q)
                    for w in range(int(cfg.get("realizations", 1)))]
            cube_rows.append({
                "cube": [list(b) for b in q],
                "integrals": vals,
                "expected": process.mean * area,
            })
        out["levels"].append({
            "j": j, "epsilon": eps, "cells": n_cells, "means": means,
            "mean_of_means": float(np.mean(means)),
            "expected_mean": process.mean,
            "weak_star": cube_rows,
        })
        print(f"j = {j}: eps = {eps:.6g}, cells = {n_cells}, "
              f"mean = {np.mean(means):.6f} "
              f"(expected {process.mean:.6f})")
    path = _write_json(out, args.out or "out", "ergodic.json")
    print(f"wrote {path}")
    return 0


# -- solve -------------------------------------------------------------------

def _default_solve_config() -> dict:
    return {
        "grid": {"dimension": 2, "extent": [1.0], "height": 0.5,
                 "shape": [161, 81], "a": 0.5, "p": 2.0},
        "kind": "eps",
        "obstacles": "all",
        "psi": {"name": "constant", "value": 0.5},
        "sigma": {"faces": ["top"],
                  "data": {"name": "cosine", "offset": 0.25,
                           "amplitude": 0.25, "frequency": 1.0}},
    }


def _grid_from_config(g: dict) -> GridSpec:
    return GridSpec(
        dimension=int(g["dimension"]),
        extent=tuple(g["extent"]),
        height=float(g["height"]),
        shape=tuple(g["shape"]),
        weight_exponent=float(g.get("a", 0.0)),
        energy_exponent=float(g.get("p", 2.0)),
        origin=tuple(g["origin"]) if g.get("origin") else None,
    )


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config) or _default_solve_config()
    grid = _grid_from_config(cfg["grid"])
    psi = make_data_function(cfg.get("psi", 0.0))
    source = make_data_function(cfg.get("source"))
    sigma = None
    if cfg.get("sigma"):
        sigma = BoundaryCondition(
            tuple(cfg["sigma"]["faces"]),
            make_data_function(cfg["sigma"].get("data", 0.0)))
    kind = cfg.get("kind", "eps")
    if kind == "eps":
        obstacles = cfg.get("obstacles")
        if obstacles == "all":
            obstacles = np.ones(grid.shape[:-1], dtype=bool)
        elif isinstance(obstacles, list):
            obstacles = [shape_from_dict(s) for s in obstacles]
        problem = ObstacleProblem(
            grid, obstacles=obstacles, psi=psi, sigma=sigma,
            witness=make_data_function(cfg.get("witness")), source=source)
        report = solve_eps_problem(problem)
    elif kind == "limit":
        coeff = cfg.get("coefficient", 0.0)
        coeff = math.inf if coeff == "infinity" else float(coeff)
        problem = LimitProblem(grid, coefficient=coeff, psi=psi,
                               sigma=sigma, source=source)
        report = solve_limit_problem(problem)
    else:
        print(f"unknown solve kind {kind!r}", file=sys.stderr)
        return 2
    out_dir = args.out or "out"
    d = report.to_dict()
    if args.deterministic:
        d["wall_ms"] = 0.0
    path = _write_json(d, out_dir, "solve.json")
    field_path = os.path.join(out_dir, "field.csv")
    save_field_csv(report.field, field_path)
    print(f"energy = {report.energy:.8g}  total = {report.total_energy:.8g}")
    print(f"iterations = {report.iterations}  converged = {report.converged}"
          f"  backend = {report.backend}")
    print(f"wrote {path} and {field_path}")
    return 0


# -- study / regimes ----------------------------------------------------------

def _print_study(report: ConvergenceReport) -> None:
    print(f"regime = {report.regime}  "
          f"limit energy = {report.limit_energy:.8g}")
    for s in report.level_stats:
        print(f"  j = {s.j}: eps = {s.epsilon:.6g}, "
              f"energy = {s.mean_energy:.8g} +- {s.stderr_energy:.2g}, "
              f"rel gap = {s.rel_gap:.4%}, "
              f"distance = {s.mean_distance:.6g}")
    print(f"  slack trend rho = {report.slack_spearman}, "
          f"distance trend rho = {report.distance_spearman}")


def _study_plan(args):
    cfg = _load_config(args.config)
    if cfg is None:
        seed = args.seed if args.seed is not None else 20260819
        plan = default_study_plan(seed=seed)
    else:
        plan = plan_from_dict(cfg)
        if args.seed is not None:
            plan = replace(plan, seed=args.seed,
                           process=replace(plan.process, seed=args.seed))
    if args.out:
        plan = replace(plan, out_dir=args.out)
    return plan


def _cmd_study(args) -> int:
    plan = _study_plan(args)
    threads = 1 if args.deterministic else max(args.threads, 1)
    report = run_convergence_study(plan, threads=threads)
    paths = emit_report(report, out_dir=plan.out_dir,
                        deterministic=args.deterministic)
    _print_study(report)
    print(f"wrote {paths['csv']} and {paths['json']}")
    return 0


def _cmd_regimes(args) -> int:
    cfg = _load_config(args.config)
    if cfg is None:
        seed = args.seed if args.seed is not None else 20260819
        plan = default_regime_plan(seed=seed)
    else:
        plan = plan_from_dict(cfg)
        if args.seed is not None:
            plan = replace(plan, seed=args.seed,
                           process=replace(plan.process, seed=args.seed))
    out_dir = args.out or plan.out_dir
    threads = 1 if args.deterministic else max(args.threads, 1)
    suite = run_regime_suite(plan, threads=threads)
    for regime, report in suite["reports"].items():
        emit_report(report, out_dir=out_dir, prefix=f"report_{regime}",
                    deterministic=args.deterministic)
        _print_study(report)
    sandwich = suite["sandwich"]
    path = _write_json(sandwich, out_dir, "sandwich.json")
    print(f"sandwich: unconstrained = {sandwich['unconstrained']:.8g} "
          f"<= penalized = {sandwich['penalized']:.8g} "
          f"<= hard = {sandwich['hard']:.8g} "
          f"(ordered = {sandwich['ordered']})")
    print(f"wrote {path}")
    return 0


# -- entry point ---------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thinlab",
        description="Obstacle lattices on weighted boxes: capacities, "
                    "ergodic checks, constrained solves, and convergence "
                    "studies.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="JSON config file (omit for a built-in preset)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the preset/config seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for study cells")
    common.add_argument("--out", default=None,
                        help="output directory")
    common.add_argument("--single-thread-deterministic",
                        dest="deterministic", action="store_true",
                        help="one thread, wall-clock columns zeroed; "
                             "reruns are byte-identical")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("capacity", parents=[common],
                   help="capacity ladder of a shape")
    sub.add_parser("ergodic", parents=[common],
                   help="empirical means and weak-star integrals")
    sub.add_parser("solve", parents=[common],
                   help="one constrained or penalized solve")
    sub.add_parser("study", parents=[common],
                   help="multi-level convergence study")
    sub.add_parser("regimes", parents=[common],
                   help="three scaling regimes plus the energy sandwich")
    args = parser.parse_args(argv)
    handler = {
        "capacity": _cmd_capacity,
        "ergodic": _cmd_ergodic,
        "solve": _cmd_solve,
        "study": _cmd_study,
        "regimes": _cmd_regimes,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
