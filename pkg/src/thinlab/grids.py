"""Weighted tensor grids on half-space boxes.

Everything lives on the node lattice of a box U = prod_k (o_k, o_k + L_k)
x (0, H), with the last axis vertical and the bottom node layer exactly on
{z = 0}.  Integrals carry the measure mu = z^a dx; vertical cell factors
use the exact antiderivative (z1^{a+1} - z0^{a+1})/(a+1), so the singular
(a < 0) and degenerate (a > 0) cases are both integrated without quadrature
blow-up.  The bottom face itself carries plain (N-1)-dimensional Lebesgue
quadrature.

The discrete p-energy of a field is assembled per cell from one-sided
gradient samples anchored at every cell corner:

    E(u) = sum_cells mu(cell)/2^N * sum_corners |g_corner|^p,

where g_corner collects, per axis, the difference along the cell edge
incident to that corner.  Every sample is exact for affine fields, and the
averaging treats all corners alike, so no node column is left without
stiffness at boundaries.  For p = 2 the sum expands into an edge-weighted
quadratic form (see edge_weights) whose kernel is exactly the constants,
which is what the solvers iterate on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

__all__ = [
    "GridSpec",
    "ScalarField",
    "WeightedQuadrature",
    "MuckenhouptReport",
    "weighted_energy",
    "weighted_lp_norm",
    "trace",
    "trace_lp_norm",
    "muckenhoupt_check",
    "poincare_ratio",
    "sobolev_ratio",
    "save_field_csv",
    "quadrature",
]


def _check_exponents(dimension: int, a: float, p: float) -> None:
    if not a > -1.0:
        raise ValueError(f"weight exponent a={a} must be > -1")
    lo = max(1.0 + a, 1.0)
    if not (p > lo and p < dimension + a):
        raise ValueError(
            f"energy exponent p={p} outside the admissible window "
            f"({lo}, {dimension + a}) for a={a}, N={dimension}")


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over a half-space box, with weight and energy exponents.

    Attributes
    ----------
    dimension : 2 or 3.
    extent : horizontal side lengths, one per horizontal axis.
    height : vertical side length H.
    shape : nodes per axis (vertical last); spacings are extent/(n-1).
    weight_exponent : a in the vertical weight z^a, a > -1.
    energy_exponent : p with max(1+a, 1) < p < dimension + a.
    origin : horizontal coordinates of the lower corner (default zeros).
    """

    dimension: int
    extent: tuple[float, ...]
    height: float
    shape: tuple[int, ...]
    weight_exponent: float
    energy_exponent: float
    origin: tuple[float, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        object.__setattr__(self, "extent", tuple(float(x) for x in self.extent))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * (self.dimension - 1))
        else:
            object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if len(self.extent) != self.dimension - 1:
            raise ValueError("extent needs one entry per horizontal axis")
        if len(self.origin) != self.dimension - 1:
            raise ValueError("origin needs one entry per horizontal axis")
        if len(self.shape) != self.dimension:
            raise ValueError("shape needs one entry per axis")
        if any(n < 2 for n in self.shape):
            raise ValueError("need at least 2 nodes per axis")
        if any(x <= 0 for x in self.extent) or self.height <= 0:
            raise ValueError("box sides must be positive")
        _check_exponents(self.dimension, self.weight_exponent, self.energy_exponent)

    # -- geometry -----------------------------------------------------------

    @property
    def spacings(self) -> tuple[float, ...]:
        hs = [L / (n - 1) for L, n in zip(self.extent, self.shape[:-1])]
        hs.append(self.height / (self.shape[-1] - 1))
        return tuple(hs)

    def axis(self, k: int) -> np.ndarray:
        """Node coordinates along axis k (vertical axis is k = dimension-1)."""
        n = self.shape[k]
        if k == self.dimension - 1:
            return np.linspace(0.0, self.height, n)
        return self.origin[k] + np.linspace(0.0, self.extent[k], n)

    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.dimension)]

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.shape)

    @property
    def total_measure(self) -> float:
        a = self.weight_exponent
        horiz = math.prod(self.extent)
        return horiz * self.height ** (a + 1.0) / (a + 1.0)


def _vertical_factors(grid: GridSpec) -> np.ndarray:
    """Exact integrals of z^a over the vertical cells."""
    z = grid.axis(grid.dimension - 1)
    a = grid.weight_exponent
    za = z ** (a + 1.0)
    return (za[1:] - za[:-1]) / (a + 1.0)


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


class WeightedQuadrature:
    """Per-cell measures of mu = z^a dx, plus derived nodal and face weights.

    cell_measures has one entry per grid cell; node_measures spreads each
    cell equally onto its 2^N corners (used for linear source terms);
    bottom_weights is the unweighted Lebesgue trapezoid rule on {z = 0}.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        hs = grid.spacings
        vert = _vertical_factors(grid)
        horiz = math.prod(hs[:-1])
        if grid.dimension == 2:
            cells = np.broadcast_to(vert[None, :] * horiz,
                                    grid.cell_shape).copy()
        else:
            cells = np.broadcast_to(vert[None, None, :] * horiz,
                                    grid.cell_shape).copy()
        self.cell_measures = cells
        self.cell_measures.flags.writeable = False

        nodes = np.zeros(grid.shape)
        frac = cells / (2 ** grid.dimension)
        for offsets in np.ndindex(*(2,) * grid.dimension):
            sl = tuple(slice(o, o + n - 1) for o, n in zip(offsets, grid.shape))
            nodes[sl] += frac
        self.node_measures = nodes
        self.node_measures.flags.writeable = False

        w = _trapezoid_weights(grid.shape[0], hs[0])
        if grid.dimension == 3:
            w = np.outer(w, _trapezoid_weights(grid.shape[1], hs[1]))
        self.bottom_weights = w
        self.bottom_weights.flags.writeable = False

    def total(self) -> float:
        return float(self.cell_measures.sum())


@lru_cache(maxsize=64)
def quadrature(grid: GridSpec) -> WeightedQuadrature:
    return WeightedQuadrature(grid)


@lru_cache(maxsize=64)
def edge_weights(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Edge weights of the p=2 quadratic form, one array per axis.

    The all-corners cell energy with p=2 expands into
    sum_edges w_e (u_head - u_tail)^2: each cell spreads
    mu / (2^{N-1} h_d^2) onto each of its 2^{N-1} edges parallel to axis d
    (every edge is used by its two endpoint corners, and the corner average
    carries 1/2^N).  Shapes: the axis-d array is the grid shape with that
    axis shortened by 1.
    """
    mu = quadrature(grid).cell_measures
    hs = grid.spacings
    nd = grid.dimension
    out = []
    for d in range(nd):
        others = [ax for ax in range(nd) if ax != d]
        w = np.zeros(tuple(n - 1 if ax == d else n
                           for ax, n in enumerate(grid.shape)))
        for offsets in np.ndindex(*(2,) * len(others)):
            pads = [(0, 0)] * nd
            for ax, o in zip(others, offsets):
                pads[ax] = (o, 1 - o)
            w += np.pad(mu, pads)
        w /= 2.0 ** (nd - 1) * hs[d] ** 2
        w.flags.writeable = False
        out.append(w)
    return tuple(out)


@dataclass
class ScalarField:
    """Nodal values of a function on a GridSpec."""

    grid: GridSpec
    values: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if self.validate and not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        mesh = np.meshgrid(*grid.axes(), indexing="ij")
        return cls(grid, np.asarray(fn(*mesh), dtype=float))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), validate=False)

    def _binary(self, other, op) -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            other = other.values
        return ScalarField(self.grid, op(self.values, other), validate=False)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * float(scalar), validate=False)

    __rmul__ = __mul__


# -- gradient sampling ------------------------------------------------------

def _axis_diffs(grid: GridSpec, v: np.ndarray) -> list[np.ndarray]:
    """Forward differences / spacing, one array per axis."""
    return [np.diff(v, axis=d) / h for d, h in enumerate(grid.spacings)]


def _corner_shifts(nd: int):
    """All corner offset tuples of an N-cube."""
    return list(np.ndindex(*(2,) * nd))


def _corner_grad_sq(diffs, cell_shape, sigma) -> np.ndarray:
    """|g|^2 at corner sigma of every cell.

    Component d of the corner gradient is the difference along the cell
    edge incident to the corner, i.e. diffs[d] sliced at the corner's
    offsets on the other axes.
    """
    nd = len(cell_shape)
    g2 = 0.0
    for d in range(nd):
        sl = tuple(slice(0, cell_shape[ax]) if ax == d
                   else slice(sigma[ax], sigma[ax] + cell_shape[ax])
                   for ax in range(nd))
        comp = diffs[d][sl]
        g2 = g2 + comp * comp
    return g2


def _cell_energy_density(grid: GridSpec, v: np.ndarray, p: float) -> np.ndarray:
    diffs = _axis_diffs(grid, v)
    cell_shape = grid.cell_shape
    nd = grid.dimension
    acc = 0.0
    for sigma in _corner_shifts(nd):
        g2 = _corner_grad_sq(diffs, cell_shape, sigma)
        acc = acc + (g2 if p == 2.0 else g2 ** (p / 2.0))
    return acc / 2.0 ** nd


def weighted_energy(u: ScalarField, p: float | None = None) -> float:
    """The discrete weighted p-Dirichlet energy sum_cells mu |grad u|^p."""
    grid = u.grid
    if p is None:
        p = grid.energy_exponent
    mu = quadrature(grid).cell_measures
    return float(np.sum(mu * _cell_energy_density(grid, u.values, p)))


def _cell_values(v: np.ndarray, dimension: int) -> np.ndarray:
    if dimension == 2:
        return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
    return 0.125 * (v[:-1, :-1, :-1] + v[1:, :-1, :-1] + v[:-1, 1:, :-1]
                    + v[1:, 1:, :-1] + v[:-1, :-1, 1:] + v[1:, :-1, 1:]
                    + v[:-1, 1:, 1:] + v[1:, 1:, 1:])


def weighted_lp_norm(u: ScalarField, q: float) -> float:
    """(sum_cells mu(cell) |u(cell)|^q)^(1/q), u(cell) = corner average."""
    if q < 1.0:
        raise ValueError(f"norm exponent q={q} must be >= 1")
    mu = quadrature(u.grid).cell_measures
    vals = _cell_values(u.values, u.grid.dimension)
    return float(np.sum(mu * np.abs(vals) ** q) ** (1.0 / q))


def trace(u: ScalarField) -> np.ndarray:
    """Restriction of the field to the bottom node layer {z = 0}."""
    return u.values[..., 0].copy()


def trace_lp_norm(grid: GridSpec, bottom_values: np.ndarray, q: float) -> float:
    """Unweighted Lebesgue L^q norm of a bottom-face nodal field."""
    if q < 1.0:
        raise ValueError(f"norm exponent q={q} must be >= 1")
    w = quadrature(grid).bottom_weights
    return float(np.sum(w * np.abs(bottom_values) ** q) ** (1.0 / q))


# -- Muckenhoupt admissibility gate ----------------------------------------

def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _ball_weight_integral(alpha: float, radius: float, center_z: float,
                          dimension: int) -> float:
    """integral of |z|^alpha over the ball B_r(center), reduced to 1-D.

    Slicing the ball horizontally gives
    omega_{N-1} * int_{-r}^{r} |c+s|^alpha (r^2-s^2)^{(N-1)/2} ds.
    """
    if alpha <= -1.0 and abs(center_z) <= radius:
        # the closed ball touches z = 0, where |z|^alpha is non-integrable
        return math.inf
    wslice = _unit_ball_volume(dimension - 1)
    expo = (dimension - 1) / 2.0

    def integrand(s):
        return abs(center_z + s) ** alpha * (radius * radius - s * s) ** expo

    pts = []
    if abs(center_z) < radius:
        pts.append(-center_z)  # kink/singularity where the slab crosses z=0
    val, _ = quad(integrand, -radius, radius, points=pts or None, limit=200)
    return wslice * val


@dataclass(frozen=True)
class MuckenhouptReport:
    admissible: bool
    reason: str
    sup_product: float
    samples: tuple  # (radius, center, product) triples


def muckenhoupt_check(a: float, p: float,
                      sample_radii=None, sample_centers=None,
                      dimension: int = 2) -> MuckenhouptReport:
    """A_p verdict for the weight |z|^a, with sampled averaged products.

    The product (r^{-N} int_B w)(r^{-N} int_B w^{1/(1-p)})^{p-1} is evaluated
    on the sampled balls; the verdict itself is the integrability rule:
    admissible iff a > -1 (weight locally integrable) and a < p-1 (dual
    weight locally integrable).
    """
    if p <= 1.0:
        raise ValueError("Muckenhoupt classes need p > 1")
    radii = tuple(sample_radii) if sample_radii is not None else (0.25, 0.5, 1.0, 2.0)
    centers = tuple(sample_centers) if sample_centers is not None else (0.0, 0.25, 1.0, 3.0)
    dual = -a / (p - 1.0)
    samples = []
    sup = 0.0
    for r in radii:
        for c in centers:
            iw = _ball_weight_integral(a, r, c, dimension)
            idw = _ball_weight_integral(dual, r, c, dimension)
            scale = float(r) ** dimension
            prod = (iw / scale) * (idw / scale) ** (p - 1.0)
            samples.append((float(r), float(c), prod))
            sup = max(sup, prod)
    if a <= -1.0:
        return MuckenhouptReport(False, "not A_p: weight non-integrable",
                                 sup, tuple(samples))
    if a >= p - 1.0:
        return MuckenhouptReport(False, "not A_p: dual weight non-integrable",
                                 sup, tuple(samples))
    return MuckenhouptReport(True, "admissible", sup, tuple(samples))


# -- inequality ratio diagnostics -------------------------------------------

def _region_cell_mask(grid: GridSpec, outer, inner=None) -> np.ndarray:
    """Cells fully inside `outer` and fully outside `inner` (if given)."""
    axes = grid.axes()
    nd = grid.dimension

    def per_axis(box, want_inside):
        masks = []
        for k in range(nd):
            lo_nodes = axes[k][:-1]
            hi_nodes = axes[k][1:]
            lo, hi = box[k]
            if want_inside:
                masks.append((lo_nodes >= lo - 1e-12) & (hi_nodes <= hi + 1e-12))
            else:
                masks.append((hi_nodes <= lo + 1e-12) | (lo_nodes >= hi - 1e-12))
        return masks

    def combine(masks, mode):
        grids = np.meshgrid(*masks, indexing="ij")
        if mode == "all":
            out = grids[0]
            for g in grids[1:]:
                out = out & g
            return out
        out = grids[0]
        for g in grids[1:]:
            out = out | g
        return out

    mask = combine(per_axis(outer, True), "all")
    if inner is not None:
        mask = mask & combine(per_axis(inner, False), "any")
    return mask


def poincare_ratio(u: ScalarField, region=None, r: float = 1.0,
                   inner=None) -> float:
    """Oscillation-to-gradient ratio on a box (or box-minus-box) region.

    Returns int_R |u - mean_mu(u)|^p dmu / (r^p int_R |grad u|^p dmu), with
    both integrals over the cells of the region.  r is the caller's scale
    for the region; the ratio is scale invariant for matched (region, r).
    """
    grid = u.grid
    p = grid.energy_exponent
    mu = quadrature(grid).cell_measures
    if region is None:
        mask = np.ones(grid.cell_shape, dtype=bool)
    else:
        mask = _region_cell_mask(grid, region, inner)
    if not mask.any():
        raise ValueError("region contains no full cell")
    m = mu * mask
    total = m.sum()
    vals = _cell_values(u.values, grid.dimension)
    mean = float((m * vals).sum() / total)
    num = float(np.sum(m * np.abs(vals - mean) ** p))
    den = float(np.sum(m * _cell_energy_density(grid, u.values, p)))
    if den == 0.0:
        raise ValueError("zero-gradient field: ratio undefined")
    return num / (float(r) ** p * den)


def sobolev_ratio(u: ScalarField) -> float:
    """||u||_{L^{p*}(mu)} / ||grad u||_{L^p(mu)} after even reflection.

    Requires u to vanish on the lateral and top boundaries; the even
    reflection across {z = 0} doubles both integrals, and
    p* = (N + a) p / (N + a - p).
    """
    grid = u.grid
    v = u.values
    scale = float(np.max(np.abs(v))) or 1.0
    border = [np.abs(v[..., -1]).max()]
    for ax in range(grid.dimension - 1):
        sl_lo = tuple(0 if k == ax else slice(None) for k in range(grid.dimension))
        sl_hi = tuple(-1 if k == ax else slice(None) for k in range(grid.dimension))
        border += [np.abs(v[sl_lo]).max(), np.abs(v[sl_hi]).max()]
    if max(border) > 1e-12 * scale:
        raise ValueError("field must vanish on lateral and top boundaries")
    a = grid.weight_exponent
    p = grid.energy_exponent
    na = grid.dimension + a
    pstar = na * p / (na - p)
    grad = 2.0 * weighted_energy(u)
    if grad == 0.0:
        raise ValueError("constant field: ratio undefined")
    mu = quadrature(grid).cell_measures
    vals = _cell_values(v, grid.dimension)
    num = (2.0 * float(np.sum(mu * np.abs(vals) ** pstar))) ** (1.0 / pstar)
    return num / grad ** (1.0 / p)


# -- serialization -----------------------------------------------------------

def save_field_csv(u: ScalarField, path) -> None:
    """Write `coord..., value` rows (plain text, for external plotting)."""
    mesh = np.meshgrid(*u.grid.axes(), indexing="ij")
    cols = [m.ravel() for m in mesh] + [u.values.ravel()]
    names = (["y", "z"] if u.grid.dimension == 2 else ["x", "y", "z"]) + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
