"""Thin-obstacle and penalized limit problems on a weighted box.

Two problem families share one discrete engine:

* ObstacleProblem: minimize the weighted p-Dirichlet energy minus an
  optional linear source, subject to u >= psi on the bottom-face nodes
  covered by the obstacle patches and u = u_0 on a Dirichlet portion of
  the boundary away from the bottom face.

* LimitProblem: same energy plus the boundary penalty
  coeff * integral of ((psi - u(.,0)) v 0)^p over the bottom face, with
  coeff >= 0; an infinite coefficient switches to hard-constraint mode
  (u >= psi on every bottom node).

Reports carry the minimizer, the energy with and without the source term,
iteration counts, KKT-style residuals, and wall time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._variational import DiscreteProblem, SolveOptions, minimize, objective
from .grids import GridSpec, ScalarField, quadrature, weighted_energy
from .shapes import ObstacleShape, rasterize_bottom

__all__ = [
    "BoundaryCondition", "ObstacleProblem", "LimitProblem", "SolveReport",
    "SolveOptions", "solve_eps_problem", "solve_limit_problem", "energy_of",
    "FACES",
]

FACES = ("top", "y_low", "y_high", "x_low", "x_high")


def _evaluate(data, *coords) -> np.ndarray:
    grids = np.meshgrid(*coords, indexing="ij")
    if callable(data):
        out = np.asarray(data(*grids), dtype=float)
        return np.broadcast_to(out, grids[0].shape).astype(float)
    return np.full(grids[0].shape, float(data))


@dataclass(frozen=True)
class BoundaryCondition:
    """Dirichlet data u_0 on a union of boundary faces.

    Faces are named top / y_low / y_high (and x_low / x_high for N=3).
    The bottom face is never admissible: the Dirichlet portion must stay
    node-disjoint from the constrained hyperplane.  Lateral faces exclude
    their bottom-most node row for the same reason.
    """

    faces: tuple[str, ...]
    data: object = 0.0

    def __post_init__(self):
        object.__setattr__(self, "faces", tuple(self.faces))
        for f in self.faces:
            if f not in FACES:
                raise ValueError(f"unknown boundary face {f!r}; "
                                 f"choose from {FACES}")

    def node_mask_and_values(self, grid: GridSpec
                             ) -> tuple[np.ndarray, np.ndarray]:
        mask = np.zeros(grid.shape, dtype=bool)
        values = np.zeros(grid.shape)
        axes = grid.axes()
        nd = grid.dimension
        for f in self.faces:
            if f in ("x_low", "x_high") and nd != 3:
                raise ValueError(f"face {f!r} needs a 3-d grid")
            if f == "top":
                sel = (slice(None),) * (nd - 1) + (grid.shape[-1] - 1,)
                face_axes = axes[:-1]
                fixed = (nd - 1, axes[-1][-1])
            else:
                axis = {"y_low": nd - 2, "y_high": nd - 2,
                        "x_low": 0, "x_high": 0}[f]
                pos = 0 if f.endswith("_low") else grid.shape[axis] - 1
                sel = tuple(pos if k == axis else
                            (slice(1, None) if k == nd - 1 else slice(None))
                            for k in range(nd))
                face_axes = [axes[k] for k in range(nd)
                             if k != axis and k != nd - 1] + [axes[-1][1:]]
                fixed = (axis, axes[axis][pos])
            coords = []
            ai = 0
            for k in range(nd):
                if k == fixed[0]:
                    coords.append(np.array([fixed[1]]))
                else:
                    coords.append(face_axes[ai])
                    ai += 1
            vals = _evaluate(self.data, *coords)
            values[sel] = np.squeeze(vals)
            mask[sel] = True
        return mask, values


def _bottom_values(grid: GridSpec, data) -> np.ndarray:
    haxes = [grid.axis(k) for k in range(grid.dimension - 1)]
    return _evaluate(data, *haxes)


def _constraint_mask(grid: GridSpec, obstacles) -> np.ndarray:
    """Bottom-face mask from a mask / shapes / ObstacleConfig / None."""
    hshape = grid.shape[:-1]
    if obstacles is None:
        return np.zeros(hshape, dtype=bool)
    if isinstance(obstacles, str):
        if obstacles == "all":
            return np.ones(hshape, dtype=bool)
        raise ValueError(f"unknown obstacle selector {obstacles!r}")
    if isinstance(obstacles, np.ndarray):
        if obstacles.dtype == bool and obstacles.shape == hshape:
            return obstacles.copy()
        raise ValueError("obstacle mask must be boolean with the "
                         "bottom-face shape")
    if isinstance(obstacles, ObstacleShape):
        return rasterize_bottom(obstacles, grid)[0]
    if hasattr(obstacles, "patches"):  # ObstacleConfig
        mask = np.zeros(hshape, dtype=bool)
        for patch in obstacles.patches:
            if not patch.shape.is_empty:
                mask |= rasterize_bottom(patch.shape, grid)[0]
        return mask
    mask = np.zeros(hshape, dtype=bool)
    for shape in obstacles:
        mask |= rasterize_bottom(shape, grid)[0]
    return mask


@dataclass
class ObstacleProblem:
    """Constrained minimization with the obstacle acting on bottom nodes.

    obstacles: None, a boolean bottom-face mask, an ObstacleShape, an
    iterable of shapes, or an ObstacleConfig; it selects the nodes where
    u >= psi is enforced.  witness is a field whose bottom trace must
    dominate psi everywhere (feasibility certificate); a None witness
    defaults to the constant sup of psi.
    """

    grid: GridSpec
    obstacles: object = None
    psi: object = 0.0
    sigma: BoundaryCondition | None = None
    witness: object = None
    source: object = None

    def __post_init__(self):
        self.mask = _constraint_mask(self.grid, self.obstacles)
        self.psi_values = _bottom_values(self.grid, self.psi)
        witness = self.witness
        if witness is None:
            witness = float(self.psi_values.max())
        wvals = _bottom_values(self.grid, witness)
        if np.any(wvals < self.psi_values - 1e-12):
            raise ValueError("witness trace must dominate psi on the "
                             "whole bottom face")
        if self.sigma is not None:
            self.sigma_mask, self.sigma_values = \
                self.sigma.node_mask_and_values(self.grid)
            if self.sigma_mask[..., 0].any():
                raise AssertionError("Dirichlet mask touched the bottom face")
        else:
            self.sigma_mask = np.zeros(self.grid.shape, dtype=bool)
            self.sigma_values = np.zeros(self.grid.shape)


@dataclass
class LimitProblem:
    """Penalized limit problem; coefficient = half * Lambda * E[gamma].

    coefficient = math.inf selects hard-constraint mode, where the
    penalty is replaced by u >= psi on every bottom node.
    """

    grid: GridSpec
    coefficient: float = 0.0
    psi: object = 0.0
    sigma: BoundaryCondition | None = None
    source: object = None

    def __post_init__(self):
        if self.coefficient < 0:
            raise ValueError("penalty coefficient must be >= 0")
        self.psi_values = _bottom_values(self.grid, self.psi)
        if self.sigma is not None:
            self.sigma_mask, self.sigma_values = \
                self.sigma.node_mask_and_values(self.grid)
        else:
            self.sigma_mask = np.zeros(self.grid.shape, dtype=bool)
            self.sigma_values = np.zeros(self.grid.shape)

    @classmethod
    def from_regime(cls, grid: GridSpec, lam: float, mean_gamma: float,
                    **kwargs) -> "LimitProblem":
        coeff = math.inf if math.isinf(lam) else 0.5 * lam * mean_gamma
        return cls(grid, coefficient=coeff, **kwargs)

    @property
    def hard_constraint(self) -> bool:
        return math.isinf(self.coefficient)


@dataclass
class SolveReport:
    """Outcome of one solve, energies split by term.

    energy: the p-Dirichlet part alone.  penalty_value: the boundary
    penalty (limit problems).  source_value: the linear term that is
    subtracted.  total_energy = energy + penalty_value - source_value.
    """

    field: ScalarField
    energy: float
    penalty_value: float
    source_value: float
    total_energy: float
    iterations: int
    converged: bool
    max_free_residual: float
    complementarity: float
    feasibility: float
    wall_ms: float
    backend: str
    method: str

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "energy", "penalty_value", "source_value", "total_energy",
            "iterations", "converged", "max_free_residual",
            "complementarity", "feasibility", "wall_ms", "backend",
            "method")}
        d["grid_shape"] = list(self.field.grid.shape)
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _source_b(grid: GridSpec, source) -> np.ndarray | None:
    if source is None:
        return None
    axes = grid.axes()
    g = _evaluate(source, *axes)
    return g * quadrature(grid).node_measures


def _report(grid, v, info, pen_coeff, psi_values, source) -> SolveReport:
    u = ScalarField(grid, v)
    e_grad = weighted_energy(u)
    pen = 0.0
    if pen_coeff not in (None, 0.0) and np.isfinite(pen_coeff):
        gap = np.maximum(psi_values - v[..., 0], 0.0)
        w = quadrature(grid).bottom_weights
        pen = float(pen_coeff * np.sum(w * gap ** grid.energy_exponent))
    src = 0.0
    if source is not None:
        b = _source_b(grid, source)
        src = float(np.sum(b * v))
    return SolveReport(
        field=u, energy=e_grad, penalty_value=pen, source_value=src,
        total_energy=e_grad + pen - src, iterations=info.iterations,
        converged=info.converged, max_free_residual=info.max_free_residual,
        complementarity=info.complementarity, feasibility=info.feasibility,
        wall_ms=info.wall_ms, backend=info.backend, method=info.method)


def _initial(grid, sigma_mask, sigma_values, warm) -> np.ndarray:
    if warm is not None:
        v = warm.values.copy() if isinstance(warm, ScalarField) \
            else np.array(warm, dtype=float)
        if v.shape != grid.shape:
            raise ValueError("warm start has the wrong shape")
    else:
        v = np.zeros(grid.shape)
    v[sigma_mask] = sigma_values[sigma_mask]
    return v


def solve_eps_problem(problem: ObstacleProblem,
                      options: SolveOptions | None = None,
                      warm_start=None) -> SolveReport:
    """Minimize the constrained discrete energy; see module docstring."""
    grid = problem.grid
    lower = None
    if problem.mask.any():
        lower = np.full(grid.shape, -np.inf)
        lower[..., 0][problem.mask] = problem.psi_values[problem.mask]
    dp = DiscreteProblem(
        grid=grid,
        free=~problem.sigma_mask,
        values0=_initial(grid, problem.sigma_mask, problem.sigma_values,
                         warm_start),
        lower=lower,
        source_b=_source_b(grid, problem.source),
    )
    v, info = minimize(dp, options)
    return _report(grid, v, info, None, problem.psi_values, problem.source)


def solve_limit_problem(problem: LimitProblem,
                        options: SolveOptions | None = None,
                        warm_start=None) -> SolveReport:
    """Minimize the penalized discrete energy (hard mode when coeff=inf)."""
    grid = problem.grid
    if problem.hard_constraint:
        lower = np.full(grid.shape, -np.inf)
        lower[..., 0] = problem.psi_values
        dp = DiscreteProblem(
            grid=grid,
            free=~problem.sigma_mask,
            values0=_initial(grid, problem.sigma_mask,
                             problem.sigma_values, warm_start),
            lower=lower,
            source_b=_source_b(grid, problem.source),
        )
        v, info = minimize(dp, options)
        return _report(grid, v, info, None, problem.psi_values,
                       problem.source)
    pen_q = None
    pen_psi = None
    if problem.coefficient > 0.0:
        pen_q = problem.coefficient * quadrature(grid).bottom_weights
        pen_psi = problem.psi_values
    dp = DiscreteProblem(
        grid=grid,
        free=~problem.sigma_mask,
        values0=_initial(grid, problem.sigma_mask, problem.sigma_values,
                         warm_start),
        source_b=_source_b(grid, problem.source),
        pen_q=pen_q,
        pen_psi=pen_psi,
    )
    v, info = minimize(dp, options)
    return _report(grid, v, info, problem.coefficient, problem.psi_values,
                   problem.source)


def energy_of(problem, u: ScalarField, tol: float = 1e-8) -> float:
    """Objective value of a field under either functional.

    For an ObstacleProblem the value is +inf when any constrained node
    violates u >= psi by more than tol; Dirichlet data must be matched
    (within tol) or the field is rejected outright.
    """
    grid = problem.grid
    if u.grid != grid:
        raise ValueError("field lives on a different grid")
    v = u.values
    if problem.sigma_mask.any():
        gap = np.abs(v - problem.sigma_values)[problem.sigma_mask]
        if float(gap.max(initial=0.0)) > tol:
            raise ValueError("field does not respect the Dirichlet data")
    e = weighted_energy(u)
    src = 0.0
    if getattr(problem, "source", None) is not None:
        src = float(np.sum(_source_b(grid, problem.source) * v))
    if isinstance(problem, ObstacleProblem):
        if problem.mask.any():
            viol = (problem.psi_values - v[..., 0])[problem.mask]
            if float(viol.max(initial=0.0)) > tol:
                return math.inf
        return e - src
    if problem.hard_constraint:
        viol = problem.psi_values - v[..., 0]
        if float(viol.max(initial=0.0)) > tol:
            return math.inf
        return e - src
    gap = np.maximum(problem.psi_values - v[..., 0], 0.0)
    w = quadrature(grid).bottom_weights
    pen = float(problem.coefficient *
                np.sum(w * gap ** grid.energy_exponent))
    return e + pen - src
