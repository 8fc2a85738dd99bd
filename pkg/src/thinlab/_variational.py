"""Discrete constrained minimization of the weighted p-energy.

One assembled problem covers every solve in the package:

    E(u) = sum_cells mu/2 (|g_lo|^p + |g_up|^p)
         + sum_bottom q_i ((psi_i - u_i)+)^p  -  sum_nodes b_i u_i

over nodal fields with u frozen at non-free nodes, optional box bounds
(hard obstacle constraints enter as per-node lower bounds).  For p = 2 the
energy is the edge-weighted quadratic form of grids.edge_weights and the
minimizer is found by red-black projected SOR (compiled kernel or numpy
fallback); general p uses projected gradient with a Barzilai-Borwein step
and backtracking.  Stopping: relative energy decrease < tol over a check
window AND feasibility residual < tol, hard cap on sweeps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grids import GridSpec, edge_weights, quadrature

__all__ = ["DiscreteProblem", "SolveOptions", "SolveInfo", "minimize", "objective"]


@dataclass
class SolveOptions:
    tol: float = 1e-10
    feas_tol: float = 1e-10
    max_sweeps: int = 1_000_000
    omega: float | None = None       # None: 2/(1+sin(pi/max(shape)))
    check_every: int = 8


@dataclass
class DiscreteProblem:
    """Assembled nodal problem; see module docstring for the objective."""

    grid: GridSpec
    free: np.ndarray                     # bool, grid.shape
    values0: np.ndarray                  # initial values; Dirichlet data at non-free nodes
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None
    source_b: np.ndarray | None = None   # nodal coefficients b_i
    pen_q: np.ndarray | None = None      # bottom-face penalty weights q_i >= 0
    pen_psi: np.ndarray | None = None    # bottom-face penalty thresholds
    p: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.p is None:
            self.p = self.grid.energy_exponent
        if (self.pen_q is None) != (self.pen_psi is None):
            raise ValueError("penalty needs both weights and thresholds")


@dataclass
class SolveInfo:
    iterations: int
    converged: bool
    energy: float
    max_free_residual: float
    complementarity: float
    feasibility: float
    wall_ms: float
    backend: str
    method: str


def _lower_array(problem) -> np.ndarray | None:
    lo = problem.lower
    if lo is None:
        return None
    if np.isscalar(lo):
        return np.full(problem.grid.shape, float(lo))
    return np.asarray(lo, dtype=float)


def _upper_array(problem) -> np.ndarray | None:
    hi = problem.upper
    if hi is None:
        return None
    if np.isscalar(hi):
        return np.full(problem.grid.shape, float(hi))
    return np.asarray(hi, dtype=float)


def objective(problem: DiscreteProblem, v: np.ndarray) -> float:
    """E(v); bounds and freezing are feasibility, not part of the value."""
    grid = problem.grid
    p = problem.p
    if p == 2.0:
        ws = edge_weights(grid)
        e = 0.0
        for d, w in enumerate(ws):
            dv = np.diff(v, axis=d)
            e += float(np.sum(w * dv * dv))
    else:
        from .grids import _cell_energy_density
        mu = quadrature(grid).cell_measures
        e = float(np.sum(mu * _cell_energy_density(grid, v, p)))
    if problem.pen_q is not None:
        gap = np.maximum(problem.pen_psi - v[..., 0], 0.0)
        e += float(np.sum(problem.pen_q * gap ** p))
    if problem.source_b is not None:
        e -= float(np.sum(problem.source_b * v))
    return e


def _pad(arr: np.ndarray, fill: float = 0.0) -> np.ndarray:
    return np.pad(arr, 1, constant_values=fill).astype(float, copy=False)


def _default_omega(shape) -> float:
    return 2.0 / (1.0 + np.sin(np.pi / max(shape)))


def _is_scalar_or_none(x) -> bool:
    return x is None or np.isscalar(x)


def _psor(problem: DiscreteProblem, u0: np.ndarray, options: SolveOptions):
    """Red-black projected SOR.

    Over-relaxed sweeps are not energy-monotone, so the stop test is the
    KKT residual on the stationary set (free nodes away from their
    bounds), evaluated at geometrically spaced checkpoints; at the unique
    fixed point of the sweep the residual vanishes.
    """
    grid = problem.grid
    nd = grid.dimension
    shape_p = tuple(n + 2 for n in grid.shape)
    c = (slice(1, -1),) * nd

    ws = edge_weights(grid)
    wpad = []
    for w in ws:
        wp = np.zeros(shape_p)
        wp[tuple(slice(1, 1 + s) for s in w.shape)] = w
        wpad.append(wp)
    diag = np.zeros(shape_p)
    for d, wp in enumerate(wpad):
        back = tuple(slice(0, -2) if ax == d else slice(1, -1)
                     for ax in range(nd))
        diag[c] += wp[back] + wp[c]
    free = _pad(problem.free.astype(np.uint8)).astype(np.uint8)
    diag[free == 0] = 1.0  # avoid 0/0 in the vectorized fallback
    omega = options.omega if options.omega is not None \
        else _default_omega(grid.shape)

    u = np.zeros(shape_p)
    u[c] = u0

    plain3d = (nd == 3 and problem.source_b is None
               and problem.pen_q is None
               and _is_scalar_or_none(problem.lower)
               and _is_scalar_or_none(problem.upper))
    if plain3d:
        lo_s = float(problem.lower) if problem.lower is not None else -np.inf
        hi_s = float(problem.upper) if problem.upper is not None else np.inf
        rhs2 = qpen = psi = None

        def sweep(color):
            _kernels.psor_sweep_3d_plain(u, wpad[0], wpad[1], wpad[2], diag,
                                         free, omega, color, lo_s, hi_s)
    else:
        rhs2 = np.zeros(shape_p)
        if problem.source_b is not None:
            rhs2[c] = 0.5 * problem.source_b
        qpen = np.zeros(shape_p)
        psi = np.zeros(shape_p)
        if problem.pen_q is not None:
            bottom = (slice(1, -1),) * (nd - 1) + (1,)
            qpen[bottom] = problem.pen_q
            psi[bottom] = problem.pen_psi
        lo = _lower_array(problem)
        hi = _upper_array(problem)
        lower = _pad(lo, -np.inf) if lo is not None \
            else np.full(shape_p, -np.inf)
        upper = _pad(hi, np.inf) if hi is not None \
            else np.full(shape_p, np.inf)
        lower[free == 0] = -np.inf
        upper[free == 0] = np.inf
        if nd == 2:
            def sweep(color):
                _kernels.psor_sweep_2d(u, wpad[0], wpad[1], diag, rhs2, qpen,
                                       psi, lower, upper, free, omega, color)
        else:
            def sweep(color):
                _kernels.psor_sweep_3d(u, wpad[0], wpad[1], wpad[2], diag,
                                       rhs2, qpen, psi, lower, upper, free,
                                       omega, color)

    free_c = problem.free
    d_center = diag[c]
    d_max = float(d_center[free_c].max(initial=1.0))
    if plain3d:
        lo_c, hi_c = lo_s, hi_s
    else:
        lo_c, hi_c = lower[c], upper[c]

    def residual_ok() -> bool:
        uc = u[c]
        s = np.zeros_like(uc)
        for d, wp in enumerate(wpad):
            fwd = tuple(slice(2, None) if ax == d else slice(1, -1)
                        for ax in range(nd))
            bck = tuple(slice(0, -2) if ax == d else slice(1, -1)
                        for ax in range(nd))
            s += wp[c] * u[fwd] + wp[bck] * u[bck]
        r = 2.0 * (d_center * uc - s)
        if qpen is not None:
            r -= 2.0 * qpen[c] * np.maximum(psi[c] - uc, 0.0)
            r -= 2.0 * rhs2[c]
        stat = free_c & (uc - lo_c > 1e-12) & (hi_c - uc > 1e-12)
        res = float(np.abs(r)[stat].max(initial=0.0))
        scale = d_max * (1.0 + float(np.abs(uc).max(initial=0.0)))
        return res <= options.tol * scale

    sweeps = 0
    converged = False
    interval = max(options.check_every, 1)
    while sweeps < options.max_sweeps:
        target = min(sweeps + interval, options.max_sweeps)
        while sweeps < target:
            sweep(0)
            sweep(1)
            sweeps += 1
        if residual_ok():
            converged = True
            break
        interval = min(interval * 2, 128)
    return u[c].copy(), sweeps, converged


def _p2_node_residual(problem: DiscreteProblem, v: np.ndarray) -> np.ndarray:
    """dE/du_i for p=2 (used for KKT reporting)."""
    grid = problem.grid
    nd = grid.dimension
    ws = edge_weights(grid)
    r = np.zeros(grid.shape)
    for d, w in enumerate(ws):
        dv = np.diff(v, axis=d) * w
        head = tuple(slice(1, None) if ax == d else slice(None) for ax in range(nd))
        tail = tuple(slice(0, -1) if ax == d else slice(None) for ax in range(nd))
        r[head] += 2.0 * dv
        r[tail] -= 2.0 * dv
    if problem.pen_q is not None:
        gap = np.maximum(problem.pen_psi - v[..., 0], 0.0)
        r[..., 0] -= 2.0 * problem.pen_q * gap
    if problem.source_b is not None:
        r -= problem.source_b
    return r


def _gradient(problem: DiscreteProblem, v: np.ndarray) -> np.ndarray:
    """dE/du for general p via the corner gradient samples."""
    grid = problem.grid
    p = problem.p
    if p == 2.0:
        return _p2_node_residual(problem, v)
    from .grids import _axis_diffs, _corner_grad_sq, _corner_shifts
    mu = quadrature(grid).cell_measures
    hs = grid.spacings
    nd = grid.dimension
    cs = grid.cell_shape
    diffs = _axis_diffs(grid, v)
    out = np.zeros(grid.shape)
    base = p * mu / 2.0 ** nd
    for sigma in _corner_shifts(nd):
        g2 = _corner_grad_sq(diffs, cs, sigma)
        coef = base * np.where(g2 > 0.0, g2, 1.0) ** (p / 2.0 - 1.0)
        coef = np.where(g2 > 0.0, coef, 0.0)
        for d in range(nd):
            sl = tuple(slice(0, cs[ax]) if ax == d
                       else slice(sigma[ax], sigma[ax] + cs[ax])
                       for ax in range(nd))
            f = coef * diffs[d][sl] / hs[d]
            head = tuple(slice(1, None) if ax == d
                         else slice(sigma[ax], sigma[ax] + cs[ax])
                         for ax in range(nd))
            tail = tuple(slice(0, -1) if ax == d
                         else slice(sigma[ax], sigma[ax] + cs[ax])
                         for ax in range(nd))
            out[head] += f
            out[tail] -= f
    if problem.pen_q is not None:
        gap = np.maximum(problem.pen_psi - v[..., 0], 0.0)
        out[..., 0] -= p * problem.pen_q * gap ** (p - 1.0)
    if problem.source_b is not None:
        out -= problem.source_b
    return out


def _project(problem, v, lo, hi, fixed):
    if lo is not None:
        np.maximum(v, lo, out=v)
    if hi is not None:
        np.minimum(v, hi, out=v)
    v[~problem.free] = fixed[~problem.free]
    return v


def _projected_bb(problem: DiscreteProblem, u0: np.ndarray, options: SolveOptions):
    lo = _lower_array(problem)
    hi = _upper_array(problem)
    fixed = problem.values0
    u = _project(problem, u0.copy(), lo, hi, fixed)
    e = objective(problem, u)
    g = _gradient(problem, u)
    g[~problem.free] = 0.0
    step = 1.0 / max(float(np.abs(g).max()), 1e-12)
    it = 0
    converged = False
    e_window = e
    while it < options.max_sweeps:
        it += 1
        for _ in range(60):  # backtracking
            v = _project(problem, u - step * g, lo, hi, fixed)
            dv = v - u
            e_new = objective(problem, v)
            if e_new <= e - 1e-4 / max(step, 1e-300) * float(np.sum(dv * dv)):
                break
            step *= 0.5
        else:
            converged = True  # no progress possible at machine scale
            u, e = v, e_new
            break
        g_new = _gradient(problem, v)
        g_new[~problem.free] = 0.0
        s = v - u
        y = g_new - g
        sy = float(np.sum(s * y))
        if sy > 0.0:
            step = float(np.sum(s * s)) / sy
        step = min(max(step, 1e-14), 1e6)
        u, g, e = v, g_new, e_new
        if it % options.check_every == 0:
            if e_window - e < options.tol * max(abs(e), 1e-30):
                converged = True
                break
            e_window = e
    return u, it, converged


def minimize(problem: DiscreteProblem, options: SolveOptions | None = None
             ) -> tuple[np.ndarray, SolveInfo]:
    options = options or SolveOptions()
    t0 = time.perf_counter()
    u0 = problem.values0.astype(float).copy()
    lo = _lower_array(problem)
    hi = _upper_array(problem)
    if lo is not None:
        np.maximum(u0, np.where(problem.free, lo, -np.inf), out=u0)
    if hi is not None:
        np.minimum(u0, np.where(problem.free, hi, np.inf), out=u0)

    if problem.p == 2.0:
        v, iters, converged = _psor(problem, u0, options)
        method = "psor"
    else:
        v, iters, converged = _projected_bb(problem, u0, options)
        method = "projected-bb"

    r = _gradient(problem, v)
    feas = 0.0
    comp = 0.0
    stat_mask = problem.free.copy()
    if lo is not None:
        gap = v - lo
        feas = max(feas, float(np.maximum(lo - v, 0.0)[problem.free].max(initial=0.0)))
        active = problem.free & (gap <= 1e-12) & np.isfinite(lo)
        lower_band = problem.free & np.isfinite(lo)
        comp = max(comp, float(np.abs(r[lower_band] * gap[lower_band])
                               .max(initial=0.0)))
        stat_mask &= ~active
    if hi is not None:
        feas = max(feas, float(np.maximum(v - hi, 0.0)[problem.free].max(initial=0.0)))
        active_hi = problem.free & (hi - v <= 1e-12) & np.isfinite(hi)
        stat_mask &= ~active_hi
    max_free = float(np.abs(r)[stat_mask].max(initial=0.0))

    info = SolveInfo(
        iterations=iters,
        converged=converged,
        energy=objective(problem, v),
        max_free_residual=max_free,
        complementarity=comp,
        feasibility=feas,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        backend=_kernels.BACKEND,
        method=method,
    )
    return v, info
