"""Experiment harness: obstacle lattices at shrinking scales vs the limit.

A plan fixes the weighted box, the lattice scaling rules, the random
process, the boundary data, and a ladder of levels.  Running it solves the
limit problem once on the finest grid, then for every (level, realization)
pair builds the obstacle configuration, solves the constrained problem on
a level grid sized to resolve the patches, and records energies and
weighted L^p distances to the restricted limit minimizer.  The regime
suite repeats this for the vanishing, critical, and saturating scaling
rules against their respective limit objects and reports the energy
sandwich between them.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import spearmanr

from .capacity import global_capacity
from .grids import GridSpec, ScalarField, weighted_lp_norm
from .shapes import interval, shape_from_dict, shape_to_dict
from .solvers import (BoundaryCondition, LimitProblem, ObstacleProblem,
                      solve_eps_problem, solve_limit_problem)
from .stochastic import (LatticeConfig, ProcessSpec, Realization,
                         build_obstacle_config, constant_process,
                         periodic_process)

__all__ = [
    "ExperimentPlan", "StudyRow", "LevelStats", "ConvergenceReport",
    "StudyError", "run_convergence_study", "run_regime_suite",
    "emit_report", "default_study_plan", "default_regime_plan",
    "make_data_function", "plan_to_dict", "plan_from_dict",
]

CSV_COLUMNS = ("j", "epsilon", "delta", "omega_id", "eps_energy",
               "limit_energy", "lp_distance", "iterations", "residual",
               "wall_ms")

GUARD_FACTOR = 4.0  # mesh size must be <= patch radius / GUARD_FACTOR


class StudyError(RuntimeError):
    """A plan failed validation (typically the resolution guard)."""


def make_data_function(spec):
    """Named closed-form data: zero, constant, or a cosine profile.

    The cosine profile is offset + amplitude*cos(2*pi*frequency*t) in the
    first horizontal coordinate; all functions accept full coordinate
    grids and broadcast.
    """
    if spec is None:
        return None
    if callable(spec) or np.isscalar(spec):
        return spec
    name = spec["name"]
    if name == "zero":
        return 0.0
    if name == "constant":
        return float(spec["value"])
    if name == "cosine":
        off = float(spec.get("offset", 0.0))
        amp = float(spec.get("amplitude", 1.0))
        freq = float(spec.get("frequency", 1.0))

        def profile(*coords):
            return off + amp * np.cos(2.0 * np.pi * freq * coords[0])

        return profile
    raise ValueError(f"unknown data function {name!r}")


def _data_spec_dict(spec):
    if spec is None or isinstance(spec, dict):
        return spec
    if np.isscalar(spec):
        return {"name": "constant", "value": float(spec)}
    raise ValueError("cannot serialize a custom callable; use a named spec")


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one convergence study."""

    lattice: LatticeConfig
    process: ProcessSpec
    height: float = 0.5
    levels: tuple[int, ...] = ()
    realizations: int = 8
    resolve_factor: float = 5.0
    reference_capacity: float | None = None
    psi: object = 0.0
    sigma_faces: tuple[str, ...] = ("top",)
    sigma_data: object = 0.0
    witness: object = None
    source: object = None
    seed: int = 0
    out_dir: str = "studies"

    def __post_init__(self):
        if not self.levels:
            object.__setattr__(self, "levels",
                               tuple(range(self.lattice.n_levels())))
        if self.realizations < 0:
            raise ValueError("realizations must be >= 0")

    @property
    def dimension(self) -> int:
        return self.lattice.dimension

    def gamma_floor(self) -> float:
        """Smallest positive value the process can take (for grid sizing)."""
        pr = self.process
        if pr.kind == "constant":
            v = pr.params[0]
        elif pr.kind == "periodic":
            positive = [v for v in pr.params if v > 0]
            v = min(positive) if positive else 0.0
        elif pr.params[0] == "uniform":
            v = pr.params[1]
        else:
            v = pr.params[1]
        if v <= 0:
            raise StudyError(
                "process admits arbitrarily small positive gamma; "
                "cannot size grids to resolve every patch")
        return float(v)

    def patch_radius(self, j: int, gamma: float) -> float:
        c_t = self.reference_capacity
        if c_t is None:
            raise StudyError("reference capacity not yet computed")
        q = self.lattice.cap_exponent
        scale = (self.lattice.delta(j) * gamma / c_t) ** (1.0 / q)
        return scale * self.lattice.reference_shape.bounding_radius()

    def level_grid(self, j: int) -> GridSpec:
        """Grid whose mesh resolves the smallest patch of the level and
        whose nodes contain every lattice center."""
        lat = self.lattice
        eps = lat.epsilon(j)
        r_floor = self.patch_radius(j, self.gamma_floor())
        cells_floor = max(int(math.ceil(self.resolve_factor * eps
                                        / r_floor - 1e-9)), 2)
        extent = tuple(hi - lo for lo, hi in lat.window)
        spans = extent + (self.height,)

        def tiles(c: int) -> list[int] | None:
            counts = []
            for span in spans:
                exact = span * c / eps
                n_cells = int(round(exact))
                if n_cells < 1 or abs(exact - n_cells) > 1e-9 * max(exact, 1.0):
                    return None
                counts.append(n_cells)
            return counts

        counts = None
        for c in range(cells_floor, cells_floor + 4096):
            counts = tiles(c)
            if counts is not None:
                cells_per_eps = c
                break
        if counts is None:
            raise StudyError(
                f"level {j}: no mesh at or above {cells_floor} cells per "
                f"period tiles the box {extent} x {self.height}")
        h = eps / cells_per_eps
        shape = [n + 1 for n in counts]
        return GridSpec(
            dimension=lat.dimension, extent=extent, height=self.height,
            shape=tuple(shape), weight_exponent=lat.a,
            energy_exponent=lat.p,
            origin=tuple(lo for lo, _ in lat.window))

    def finest_grid(self) -> GridSpec:
        return self.level_grid(max(self.levels,
                                   key=lambda j: 1.0 / self.lattice.epsilon(j)))

    def sigma(self) -> BoundaryCondition | None:
        if not self.sigma_faces:
            return None
        return BoundaryCondition(tuple(self.sigma_faces),
                                 make_data_function(self.sigma_data))


@dataclass(frozen=True)
class StudyRow:
    j: int
    epsilon: float
    delta: float
    omega_id: int
    eps_energy: float
    limit_energy: float
    lp_distance: float
    iterations: int
    residual: float
    wall_ms: float


@dataclass(frozen=True)
class LevelStats:
    j: int
    epsilon: float
    delta: float
    n_omega: int
    mean_energy: float
    stderr_energy: float
    mean_distance: float
    rel_gap: float
    mean_slack: float


@dataclass
class ConvergenceReport:
    regime: str
    limit_energy: float
    rows: tuple[StudyRow, ...]
    level_stats: tuple[LevelStats, ...]
    slack_spearman: float | None
    distance_spearman: float | None
    plan: dict
    wall_ms: float

    def to_dict(self, deterministic: bool = False) -> dict:
        rows = [row._asdict() if hasattr(row, "_asdict") else
                {k: getattr(row, k) for k in CSV_COLUMNS}
                for row in self.rows]
        if deterministic:
            for r in rows:
                r["wall_ms"] = 0.0
        return {
            "regime": self.regime,
            "limit_energy": self.limit_energy,
            "rows": rows,
            "levels": [
                {k: getattr(s, k) for k in (
                    "j", "epsilon", "delta", "n_omega", "mean_energy",
                    "stderr_energy", "mean_distance", "rel_gap",
                    "mean_slack")}
                for s in self.level_stats
            ],
            "slack_spearman": self.slack_spearman,
            "distance_spearman": self.distance_spearman,
            "plan": self.plan,
            "wall_ms": 0.0 if deterministic else self.wall_ms,
        }


def _spearman(levels, values) -> float | None:
    if len(set(levels)) < 2 or len(set(float(v) for v in values)) < 2:
        return None
    rho = spearmanr(levels, values).statistic
    return None if math.isnan(rho) else float(rho)


def _restrict(u: ScalarField, target: GridSpec) -> np.ndarray:
    """Linear interpolation of a field onto another grid of the same box."""
    src = u.grid
    interp = RegularGridInterpolator(tuple(src.axes()), u.values,
                                     method="linear", bounds_error=False,
                                     fill_value=None)
    mesh = np.meshgrid(*target.axes(), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return interp(pts).reshape(target.shape)


def _limit_problem_for(plan: ExperimentPlan, grid: GridSpec) -> LimitProblem:
    lat = plan.lattice
    psi = make_data_function(plan.psi)
    sigma = plan.sigma()
    source = make_data_function(plan.source)
    if lat.regime == "zero":
        coeff = 0.0
    elif lat.regime == "infinity":
        coeff = math.inf
    else:
        coeff = 0.5 * lat.Lambda * plan.process.mean
    return LimitProblem(grid, coefficient=coeff, psi=psi, sigma=sigma,
                        source=source)


def _ensure_reference_capacity(plan: ExperimentPlan) -> ExperimentPlan:
    if plan.reference_capacity is not None:
        return plan
    lat = plan.lattice
    ref = lat.reference_shape
    res = ref.bounding_radius() / 12.0
    result = global_capacity(ref, resolution=res, a=lat.a, p=lat.p,
                             dimension=lat.dimension, h_levels=2)
    c_t = result.extrapolated
    if not c_t or c_t <= 0:
        raise StudyError("reference shape has vanishing capacity")
    return replace(plan, reference_capacity=float(c_t))


def _solve_level_cell(plan, grid, ubar_values, psi, sigma, source, witness,
                      j, omega_id, limit_total):
    lat = plan.lattice
    omega = Realization(omega_id=omega_id)
    config = build_obstacle_config(lat, plan.process, j, omega,
                                   plan.reference_capacity)
    h = max(grid.spacings)
    r_min = config.min_patch_radius()
    if h > r_min / GUARD_FACTOR + 1e-12:
        raise StudyError(
            f"resolution guard: level {j} (eps={config.epsilon:.6g}) has "
            f"mesh {h:.6g} > patch radius {r_min:.6g} / {GUARD_FACTOR:g}; "
            "refine the level grid or fatten the patches")
    problem = ObstacleProblem(grid, obstacles=config, psi=psi, sigma=sigma,
                              witness=witness, source=source)
    report = solve_eps_problem(problem, warm_start=ubar_values)
    diff = ScalarField(grid, report.field.values - ubar_values)
    distance = weighted_lp_norm(diff, grid.energy_exponent)
    row = StudyRow(
        j=j, epsilon=config.epsilon, delta=config.delta, omega_id=omega_id,
        eps_energy=report.total_energy, limit_energy=limit_total,
        lp_distance=distance, iterations=report.iterations,
        residual=max(report.max_free_residual, report.feasibility),
        wall_ms=report.wall_ms)
    if not report.converged:
        raise StudyError(
            f"solver hit the sweep cap at level {j}, omega {omega_id} "
            f"(residual {row.residual:.3g})")
    return row


def run_convergence_study(plan: ExperimentPlan,
                          threads: int = 1) -> ConvergenceReport:
    """Solve the ladder of constrained problems and compare to the limit."""
    t0 = time.perf_counter()
    plan = _ensure_reference_capacity(plan)
    psi = make_data_function(plan.psi)
    sigma = plan.sigma()
    source = make_data_function(plan.source)
    witness = make_data_function(plan.witness)

    finest = plan.finest_grid()
    limit_report = solve_limit_problem(_limit_problem_for(plan, finest))
    limit_total = limit_report.total_energy
    ubar = limit_report.field

    tasks = []
    for j in plan.levels:
        grid = plan.level_grid(j)
        ubar_values = (ubar.values if grid == finest
                       else _restrict(ubar, grid))
        for omega_id in range(plan.realizations):
            tasks.append((j, omega_id, grid, ubar_values))

    def run(task):
        j, omega_id, grid, uv = task
        return _solve_level_cell(plan, grid, uv, psi, sigma, source,
                                 witness, j, omega_id, limit_total)

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]
    rows.sort(key=lambda r: (r.j, r.omega_id))

    stats = []
    for j in plan.levels:
        level_rows = [r for r in rows if r.j == j]
        if not level_rows:
            continue
        energies = np.array([r.eps_energy for r in level_rows])
        dists = np.array([r.lp_distance for r in level_rows])
        mean_e = float(energies.mean())
        stderr = float(energies.std(ddof=1) / math.sqrt(len(energies))) \
            if len(energies) > 1 else 0.0
        denom = abs(limit_total) if limit_total != 0 else 1.0
        slack = float(np.mean(np.maximum(limit_total - energies, 0.0)))
        stats.append(LevelStats(
            j=j, epsilon=level_rows[0].epsilon, delta=level_rows[0].delta,
            n_omega=len(level_rows), mean_energy=mean_e,
            stderr_energy=stderr, mean_distance=float(dists.mean()),
            rel_gap=abs(mean_e - limit_total) / denom, mean_slack=slack))

    order = list(range(len(stats)))
    slack_rho = _spearman(order, [s.mean_slack for s in stats])
    dist_rho = _spearman(order, [s.mean_distance for s in stats])
    return ConvergenceReport(
        regime=plan.lattice.regime, limit_energy=limit_total,
        rows=tuple(rows), level_stats=tuple(stats),
        slack_spearman=slack_rho, distance_spearman=dist_rho,
        plan=plan_to_dict(plan),
        wall_ms=(time.perf_counter() - t0) * 1e3)


def _regime_variant(plan: ExperimentPlan, regime: str) -> ExperimentPlan:
    lat = plan.lattice
    lam = {"zero": 0.0, "infinity": math.inf}.get(regime, lat.Lambda)
    if regime == "critical" and not (0 < lam < math.inf):
        raise StudyError("plan needs a finite positive Lambda for the "
                         "critical regime")
    lattice = replace(lat, regime=regime, Lambda=lam)
    return replace(plan, lattice=lattice)


def run_regime_suite(plan: ExperimentPlan, threads: int = 1) -> dict:
    """Run the three scaling regimes and the limit-energy sandwich.

    The sandwich solves all three limit problems on one shared grid with
    monotone warm starts (hard -> penalized -> unconstrained), so the
    ordering F_unconstrained <= F_penalized <= F_hard is inherited from
    energy descent rather than asserted up to tolerance.
    """
    if plan.lattice.regime != "critical":
        raise StudyError("the base plan of a regime suite must be critical")
    plan = _ensure_reference_capacity(plan)
    reports = {}
    for regime in ("zero", "critical", "infinity"):
        reports[regime] = run_convergence_study(
            _regime_variant(plan, regime), threads=threads)

    grid = plan.finest_grid()
    psi = make_data_function(plan.psi)
    sigma = plan.sigma()
    source = make_data_function(plan.source)
    coeff = 0.5 * plan.lattice.Lambda * plan.process.mean
    hard = solve_limit_problem(LimitProblem(
        grid, coefficient=math.inf, psi=psi, sigma=sigma, source=source))
    pen = solve_limit_problem(LimitProblem(
        grid, coefficient=coeff, psi=psi, sigma=sigma, source=source),
        warm_start=hard.field)
    free = solve_limit_problem(LimitProblem(
        grid, coefficient=0.0, psi=psi, sigma=sigma, source=source),
        warm_start=pen.field)
    sandwich = {
        "unconstrained": free.total_energy,
        "penalized": pen.total_energy,
        "hard": hard.total_energy,
        "ordered": (free.total_energy <= pen.total_energy
                    <= hard.total_energy),
    }
    return {"reports": reports, "sandwich": sandwich}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: ConvergenceReport, out_dir: str | None = None,
                prefix: str = "report",
                deterministic: bool = False) -> dict:
    """Write the CSV (one row per (j, omega)) and the JSON aggregate.

    In deterministic mode wall-clock columns are zeroed so that identical
    plans and seeds reproduce identical bytes.
    """
    out_dir = out_dir or report.plan.get("out", "studies")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    json_path = os.path.join(out_dir, f"{prefix}.json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            values = [getattr(row, c) for c in CSV_COLUMNS]
            if deterministic:
                values[-1] = 0.0
            writer.writerow([_fmt(v) for v in values])
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(deterministic=deterministic), fh,
                  indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return {"csv": csv_path, "json": json_path}


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "infinity"
    raise TypeError(f"not JSON serializable: {obj!r}")


# ---------------------------------------------------------------------------
# plan (de)serialization and default presets

def plan_to_dict(plan: ExperimentPlan) -> dict:
    lat = plan.lattice
    lam = "infinity" if math.isinf(lat.Lambda) else lat.Lambda
    return {
        "seed": plan.seed,
        "dimension": lat.dimension,
        "p": lat.p,
        "a": lat.a,
        "height": plan.height,
        "window": [list(b) for b in lat.window],
        "epsilons": list(lat.epsilons) if lat.epsilons else None,
        "levels": list(plan.levels),
        "regime": lat.regime,
        "Lambda": lam,
        "kappa": lat.kappa,
        "M": lat.M,
        "reference_shape": shape_to_dict(lat.reference_shape),
        "reference_capacity": plan.reference_capacity,
        "process": plan.process.to_dict(),
        "realizations": plan.realizations,
        "resolve_factor": plan.resolve_factor,
        "psi": _data_spec_dict(plan.psi),
        "sigma": {"faces": list(plan.sigma_faces),
                  "data": _data_spec_dict(plan.sigma_data)},
        "witness": _data_spec_dict(plan.witness),
        "source": _data_spec_dict(plan.source),
        "out": plan.out_dir,
    }


def plan_from_dict(d: dict) -> ExperimentPlan:
    lam = d.get("Lambda", 1.0)
    if lam == "infinity":
        lam = math.inf
    lattice = LatticeConfig(
        dimension=int(d["dimension"]),
        p=float(d["p"]),
        a=float(d["a"]),
        regime=d.get("regime", "critical"),
        Lambda=float(lam),
        M=float(d.get("M", 4.0)),
        reference_shape=shape_from_dict(d["reference_shape"]),
        epsilons=tuple(d["epsilons"]) if d.get("epsilons") else None,
        kappa=float(d.get("kappa", 0.25)),
        window=tuple(tuple(b) for b in d["window"]) if d.get("window")
        else None,
    )
    sigma = d.get("sigma") or {}
    return ExperimentPlan(
        lattice=lattice,
        process=ProcessSpec.from_dict(d["process"]),
        height=float(d.get("height", 0.5)),
        levels=tuple(d["levels"]) if d.get("levels") else (),
        realizations=int(d.get("realizations", 8)),
        resolve_factor=float(d.get("resolve_factor", 5.0)),
        reference_capacity=d.get("reference_capacity"),
        psi=d.get("psi", 0.0),
        sigma_faces=tuple(sigma.get("faces", ())),
        sigma_data=sigma.get("data", 0.0),
        witness=d.get("witness"),
        source=d.get("source"),
        seed=int(d.get("seed", 0)),
        out_dir=d.get("out", "studies"),
    )


def default_study_plan(seed: int = 20260819,
                       realizations: int = 8) -> ExperimentPlan:
    """Desk-scale critical-regime preset on the unit-width box.

    N=2, p=2, a=0.5, periodic gamma = 1.  Lambda is calibrated against the
    reference shape's capacity so patch radii are exactly 2*eps^2, which
    keeps every level's patches five mesh cells wide after grid sizing.
    """
    ref = interval(0.0, 1.0)
    pre = global_capacity(ref, resolution=1.0 / 12.0, a=0.5, p=2.0,
                          dimension=2, h_levels=2)
    c_t = float(pre.extrapolated)
    lattice = LatticeConfig(
        dimension=2, p=2.0, a=0.5, regime="critical",
        Lambda=math.sqrt(2.0) * c_t, M=6.0, reference_shape=ref,
        epsilons=(1 / 8, 1 / 12, 1 / 16, 1 / 20),
        window=((0.0, 1.0),))
    return ExperimentPlan(
        lattice=lattice,
        process=periodic_process([1.0], seed=seed),
        height=0.5,
        realizations=realizations,
        resolve_factor=5.0,
        reference_capacity=c_t,
        psi={"name": "constant", "value": 0.5},
        sigma_faces=("top",),
        sigma_data={"name": "cosine", "offset": 0.25, "amplitude": 0.25,
                    "frequency": 1.0},
        witness={"name": "constant", "value": 0.5},
        source=None,
        seed=seed,
    )


def default_regime_plan(seed: int = 20260819,
                        realizations: int = 2) -> ExperimentPlan:
    """Ladder shared by all three regimes (desk-scale).

    The weight a = 0.75 makes the capacity exponent equal the
    supercritical delta exponent, so patch radii scale exactly like eps:
    every level resolves its patches with the same cells-per-period
    count and the discrete patch stencil is identical across levels.
    That removes rasterization drift from the level-to-level energy
    trend, which would otherwise swamp the slow growth of the capacity
    density in the Lambda = infinity branch.
    """
    ref = interval(0.0, 1.0)
    pre = global_capacity(ref, resolution=1.0 / 12.0, a=0.75, p=2.0,
                          dimension=2, h_levels=2)
    c_t = float(pre.extrapolated)
    lattice = LatticeConfig(
        dimension=2, p=2.0, a=0.75, regime="critical",
        Lambda=c_t, M=4.0, reference_shape=ref,
        epsilons=(1 / 4, 1 / 6, 1 / 8, 1 / 12),
        window=((0.0, 1.0),))
    return ExperimentPlan(
        lattice=lattice,
        process=constant_process(0.3, seed=seed),
        height=0.5,
        realizations=realizations,
        resolve_factor=5.0,
        reference_capacity=c_t,
        psi={"name": "constant", "value": 0.5},
        sigma_faces=("top",),
        sigma_data={"name": "cosine", "offset": 0.25, "amplitude": 0.25,
                    "frequency": 1.0},
        witness={"name": "constant", "value": 0.5},
        source=None,
        seed=seed,
    )
