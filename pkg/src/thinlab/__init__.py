"""Obstacle lattices on weighted half-space boxes.

Weighted p-Dirichlet energies with the vertical weight z^a, thin-obstacle
constraints on the bottom face, whole-space capacities of the obstacle
shapes, stationary ergodic lattice fields that size them, and a study
harness comparing lattice-constrained minimizers against the penalized
limit problem across scaling regimes.
"""

from ._kernels import BACKEND, kernel_backend
from .capacity import (CapacityResult, capacitary_potential, capacity,
                       capacity_record, capacity_record_json, check_scaling,
                       check_potential_monotonicity, global_capacity)
from .grids import (GridSpec, MuckenhouptReport, ScalarField,
                    WeightedQuadrature, muckenhoupt_check, poincare_ratio,
                    quadrature, save_field_csv, sobolev_ratio, trace,
                    trace_lp_norm, weighted_energy, weighted_lp_norm)
from .lab import (ConvergenceReport, ExperimentPlan, LevelStats, StudyError,
                  StudyRow, default_regime_plan, default_study_plan,
                  emit_report, make_data_function, plan_from_dict,
                  plan_to_dict, run_convergence_study, run_regime_suite)
from .shapes import (ObstacleShape, ball, box, disk, empty, interval,
                     rasterize_bottom, rasterize_nodes, shape_from_dict,
                     shape_to_dict, union)
from .solvers import (FACES, BoundaryCondition, LimitProblem,
                      ObstacleProblem, SolveOptions, SolveReport, energy_of,
                      solve_eps_problem, solve_limit_problem)
from .stochastic import (LatticeConfig, ObstacleConfig, ObstaclePatch,
                         ProcessSpec, Realization, SeparationError,
                         build_obstacle_config, cells_inside, constant_process,
                         empirical_mean, iid_bernoulli, iid_uniform,
                         periodic_process, sample_at, sample_gamma,
                         weak_star_test)

__version__ = "0.1.0"

__all__ = [
    "__version__", "BACKEND", "kernel_backend",
    # grids
    "GridSpec", "ScalarField", "WeightedQuadrature", "MuckenhouptReport",
    "quadrature", "weighted_energy", "weighted_lp_norm", "trace",
    "trace_lp_norm", "muckenhoupt_check", "poincare_ratio", "sobolev_ratio",
    "save_field_csv",
    # shapes
    "ObstacleShape", "empty", "interval", "disk", "box", "ball", "union",
    "rasterize_bottom", "rasterize_nodes", "shape_to_dict", "shape_from_dict",
    # capacity
    "CapacityResult", "capacitary_potential", "capacity", "global_capacity",
    "check_scaling", "check_potential_monotonicity", "capacity_record",
    "capacity_record_json",
    # stochastic
    "ProcessSpec", "Realization", "LatticeConfig", "ObstaclePatch",
    "ObstacleConfig", "SeparationError", "constant_process",
    "periodic_process", "iid_uniform", "iid_bernoulli", "sample_at",
    "sample_gamma", "cells_inside", "empirical_mean", "weak_star_test",
    "build_obstacle_config",
    # solvers
    "FACES", "BoundaryCondition", "ObstacleProblem", "LimitProblem",
    "SolveReport", "SolveOptions", "solve_eps_problem",
    "solve_limit_problem", "energy_of",
    # lab
    "ExperimentPlan", "StudyRow", "LevelStats", "ConvergenceReport",
    "StudyError", "run_convergence_study", "run_regime_suite", "emit_report",
    "default_study_plan", "default_regime_plan", "make_data_function",
    "plan_to_dict", "plan_from_dict",
]
