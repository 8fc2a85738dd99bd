"""Stationary ergodic lattice fields and obstacle configurations.

The field gamma(i, omega) is realized as a counter-based keyed hash of
(master seed, realization id, lattice index).  Shifting the index by k and
shifting the realization's offset by k hash identical counters, so the
stationarity identity gamma(i + k, omega) = gamma(i, tau_k omega) holds
exactly, with no state and no sampling order.  Three process kinds ship:
constant, periodic (lattice-periodic values), and iid (uniform or
Bernoulli marginals), all uniformly bounded by gamma0 with an analytic
mean so tests can compare against closed-form expectations.

Obstacle configurations place one scaled copy of a reference shape per
lattice cell, sized so that its whole-space capacity equals the target
delta_j * gamma(i, omega) through the capacity scaling law.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .shapes import ObstacleShape, empty, shape_from_dict, shape_to_dict

__all__ = [
    "ProcessSpec", "Realization", "LatticeConfig", "ObstaclePatch",
    "ObstacleConfig", "SeparationError",
    "constant_process", "periodic_process", "iid_uniform", "iid_bernoulli",
    "sample_gamma", "sample_at", "cells_inside", "empirical_mean",
    "weak_star_test", "build_obstacle_config",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):
        x = (x + _GOLDEN).astype(np.uint64)
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def _hash_indices(seed: int, omega_id: int, idx: np.ndarray) -> np.ndarray:
    """Hash (seed, omega, index vector) -> uint64, idx shape (..., d)."""
    state = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    state = _mix(state ^ np.uint64(omega_id & 0xFFFFFFFFFFFFFFFF))
    h = np.broadcast_to(state, idx.shape[:-1]).copy()
    for d in range(idx.shape[-1]):
        coord = idx[..., d].astype(np.int64).view(np.uint64)
        h = _mix(h ^ coord)
    return h


def _uniform01(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass(frozen=True)
class ProcessSpec:
    """A stationary lattice process with known bound and mean.

    kind: "constant" | "periodic" | "iid"
    params: kind-specific ("value"; "values"; "dist"/"lo"/"hi" or
            "dist"/"prob"/"value").
    gamma0: uniform upper bound, exact by construction.
    mean: analytic expectation E[gamma].
    seed: master seed keying the hash.
    """

    kind: str
    params: tuple
    gamma0: float
    mean: float
    seed: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params),
                "gamma0": self.gamma0, "mean": self.mean, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "ProcessSpec":
        return ProcessSpec(d["kind"], tuple(d["params"]),
                           float(d["gamma0"]), float(d["mean"]),
                           int(d["seed"]))


def constant_process(value: float, seed: int = 0) -> ProcessSpec:
    if value < 0:
        raise ValueError("gamma must be nonnegative")
    return ProcessSpec("constant", (float(value),), float(value),
                       float(value), seed)


def periodic_process(values, seed: int = 0) -> ProcessSpec:
    vals = tuple(float(v) for v in values)
    if not vals or any(v < 0 for v in vals):
        raise ValueError("periodic values must be nonnegative and nonempty")
    return ProcessSpec("periodic", vals, max(vals),
                       sum(vals) / len(vals), seed)


def iid_uniform(lo: float, hi: float, seed: int = 0) -> ProcessSpec:
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= lo <= hi")
    return ProcessSpec("iid", ("uniform", float(lo), float(hi)),
                       float(hi), 0.5 * (lo + hi), seed)


def iid_bernoulli(value: float, prob: float, seed: int = 0) -> ProcessSpec:
    if value < 0 or not 0 <= prob <= 1:
        raise ValueError("need value >= 0 and prob in [0, 1]")
    return ProcessSpec("iid", ("bernoulli", float(value), float(prob)),
                       float(value), float(value) * float(prob), seed)


@dataclass(frozen=True)
class Realization:
    """One omega: an id keying the hash plus a lattice shift.

    shifted(k) is the shift map tau_k; sampling at index i under
    shifted(k) equals sampling at i + k under the original realization,
    exactly.
    """

    omega_id: int = 0
    shift: tuple[int, ...] = ()

    def shifted(self, k) -> "Realization":
        k = tuple(int(v) for v in np.atleast_1d(k))
        if not self.shift:
            return Realization(self.omega_id, k)
        if len(k) != len(self.shift):
            raise ValueError("shift has wrong length")
        return Realization(self.omega_id,
                           tuple(s + v for s, v in zip(self.shift, k)))


def sample_at(process: ProcessSpec, indices, omega: Realization) -> np.ndarray:
    """gamma at an array of lattice indices, shape (..., d) -> (...)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim == 1:
        idx = idx[:, None] if process.kind != "constant" else idx[:, None]
    if omega.shift:
        if len(omega.shift) != idx.shape[-1]:
            raise ValueError("realization shift has wrong length")
        idx = idx + np.asarray(omega.shift, dtype=np.int64)
    if process.kind == "constant":
        return np.full(idx.shape[:-1], process.params[0])
    if process.kind == "periodic":
        vals = np.asarray(process.params)
        phase = idx.sum(axis=-1) % len(vals)
        return vals[phase]
    dist = process.params[0]
    u = _uniform01(_hash_indices(process.seed, omega.omega_id, idx))
    if dist == "uniform":
        lo, hi = process.params[1], process.params[2]
        return lo + (hi - lo) * u
    if dist == "bernoulli":
        value, prob = process.params[1], process.params[2]
        return np.where(u < prob, value, 0.0)
    raise ValueError(f"unknown iid distribution {dist!r}")


def sample_gamma(process: ProcessSpec, index_window, omega: Realization
                 ) -> np.ndarray:
    """gamma over a box window of Z^d; window = ((lo, hi), ...) half-open."""
    window = _as_window(index_window)
    ranges = [np.arange(lo, hi, dtype=np.int64) for lo, hi in window]
    if any(r.size == 0 for r in ranges):
        raise ValueError("index window is empty")
    mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1)
    return sample_at(process, mesh, omega)


def _as_window(index_window):
    w = tuple(index_window)
    if len(w) == 2 and all(np.isscalar(v) for v in w):
        w = (w,)
    return tuple((int(lo), int(hi)) for lo, hi in w)


def _as_box(v):
    b = tuple(v)
    if len(b) == 2 and all(np.isscalar(x) for x in b):
        b = (b,)
    return tuple((float(lo), float(hi)) for lo, hi in b)


def cells_inside(box, epsilon: float) -> tuple[tuple[int, int], ...]:
    """Index ranges (half-open) of cells Q^i = i*eps + eps*[-1/2,1/2)^d
    fully contained in the box."""
    out = []
    for lo, hi in _as_box(box):
        i_lo = math.ceil((lo + epsilon / 2) / epsilon - 1e-9)
        i_hi = math.floor((hi - epsilon / 2) / epsilon + 1e-9)
        out.append((i_lo, i_hi + 1))
    return tuple(out)


def _default_epsilon(j: int) -> float:
    return 2.0 ** (-j)


def empirical_mean(process: ProcessSpec, V, j: int, omega: Realization,
                   epsilon: float | None = None) -> float:
    """Average of gamma over all full cells of side eps_j inside V."""
    eps = epsilon if epsilon is not None else _default_epsilon(j)
    window = cells_inside(V, eps)
    if any(hi <= lo for lo, hi in window):
        raise ValueError("no full cell of this level fits inside V")
    return float(sample_gamma(process, window, omega).mean())


def weak_star_test(process: ProcessSpec, V, j: int, omega: Realization,
                   Q, epsilon: float | None = None) -> float:
    """Integral over Q of the piecewise-constant field sum_i gamma_i chi_i.

    Overlaps between Q and the lattice cells are computed exactly, so the
    only deviations from mean * area are sampling fluctuation and the
    boundary strip of cells not fully inside V.
    """
    eps = epsilon if epsilon is not None else _default_epsilon(j)
    vbox = _as_box(V)
    qbox = _as_box(Q)
    if len(qbox) != len(vbox):
        raise ValueError("Q and V have different dimensions")
    for (ql, qh), (vl, vh) in zip(qbox, vbox):
        if ql < vl - 1e-12 or qh > vh + 1e-12:
            raise ValueError("test cube Q must be contained in V")
    window = cells_inside(vbox, eps)
    overlaps = []
    ranges = []
    for (lo, hi), (ql, qh) in zip(window, qbox):
        idx = np.arange(lo, hi, dtype=np.int64)
        left = np.maximum(idx * eps - eps / 2, ql)
        right = np.minimum(idx * eps + eps / 2, qh)
        w = np.maximum(right - left, 0.0)
        keep = w > 0
        overlaps.append(w[keep])
        ranges.append(idx[keep])
    if any(r.size == 0 for r in ranges):
        return 0.0
    mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1)
    g = sample_at(process, mesh, omega)
    weight = overlaps[0]
    for w in overlaps[1:]:
        weight = np.multiply.outer(weight, w)
    return float(np.sum(g * weight))


class SeparationError(ValueError):
    """A patch does not fit inside its separation cube (or its cell)."""


@dataclass(frozen=True)
class LatticeConfig:
    """Lattice scaling rules for an obstacle family.

    epsilons: explicit ladder of cell sides (indexed by level j), or None
              for the dyadic rule eps_j = 2^-j.
    regime:   "critical" (delta_j = Lambda * eps_j^{N-1}),
              "zero"     (delta_j = eps_j^{(N-1)(1+kappa)}),
              "infinity" (delta_j = eps_j^{(N-1)(1-kappa)}).
    Lambda:   limit of delta_j * eps_j^{-(N-1)}; must match the regime.
    M:        separation constant; each patch must fit in a cube of side
              M * eps_j^beta centered at its lattice point.
    reference_shape: unit shape whose scaled copies become the patches.
    window:   horizontal box carrying the obstacle lattice.
    """

    dimension: int
    p: float
    a: float
    regime: str
    Lambda: float
    M: float
    reference_shape: ObstacleShape
    epsilons: tuple[float, ...] | None = None
    kappa: float = 0.25
    window: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.regime not in ("critical", "zero", "infinity"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "critical":
            if not (0 < self.Lambda < math.inf):
                raise ValueError("critical regime needs Lambda in (0, inf)")
        elif self.regime == "zero":
            if self.Lambda != 0.0:
                raise ValueError("regime 'zero' needs Lambda = 0")
        elif not math.isinf(self.Lambda):
            raise ValueError("regime 'infinity' needs Lambda = inf")
        if self.cap_exponent <= 0:
            raise ValueError("need N - p + a > 0")
        if self.window is None:
            box = ((0.0, 1.0),) * (self.dimension - 1)
            object.__setattr__(self, "window", box)
        else:
            object.__setattr__(self, "window", _as_box(self.window))
        if self.epsilons is not None:
            object.__setattr__(self, "epsilons",
                               tuple(float(e) for e in self.epsilons))

    @property
    def cap_exponent(self) -> float:
        return self.dimension - self.p + self.a

    @property
    def beta(self) -> float:
        return (self.dimension - 1) / self.cap_exponent

    def epsilon(self, j: int) -> float:
        if self.epsilons is not None:
            return self.epsilons[j]
        return _default_epsilon(j)

    def n_levels(self) -> int:
        return len(self.epsilons) if self.epsilons is not None else 0

    def delta(self, j: int) -> float:
        eps = self.epsilon(j)
        d = self.dimension - 1
        if self.regime == "critical":
            return self.Lambda * eps ** d
        if self.regime == "zero":
            return eps ** (d * (1.0 + self.kappa))
        return eps ** (d * (1.0 - self.kappa))

    def lambda_scale(self, j: int) -> float:
        return self.delta(j) ** (1.0 / self.cap_exponent)


@dataclass(frozen=True)
class ObstaclePatch:
    index: tuple[int, ...]
    center: tuple[float, ...]
    shape: ObstacleShape
    gamma: float
    target_capacity: float
    scale: float


@dataclass(frozen=True)
class ObstacleConfig:
    """All patches of one level for one realization."""

    level: int
    epsilon: float
    delta: float
    patches: tuple[ObstaclePatch, ...]

    def min_patch_radius(self) -> float:
        """Smallest own-radius among nonempty patches (inf if none)."""
        radii = [
            p.shape.translated(tuple(-c for c in p.center)).bounding_radius()
            for p in self.patches if not p.shape.is_empty
        ]
        return min(radii) if radii else math.inf

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "patches": [
                {"index": list(p.index), "center": list(p.center),
                 "shape": shape_to_dict(p.shape), "gamma": p.gamma,
                 "target_capacity": p.target_capacity, "scale": p.scale}
                for p in self.patches
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @staticmethod
    def from_dict(d: dict) -> "ObstacleConfig":
        patches = tuple(
            ObstaclePatch(tuple(p["index"]), tuple(p["center"]),
                          shape_from_dict(p["shape"]), p["gamma"],
                          p["target_capacity"], p["scale"])
            for p in d["patches"])
        return ObstacleConfig(d["level"], d["epsilon"], d["delta"], patches)


def build_obstacle_config(lattice: LatticeConfig, process: ProcessSpec,
                          j: int, omega: Realization,
                          reference_capacity: float) -> ObstacleConfig:
    """Scale and place one patch per lattice cell inside the window.

    The patch at cell i is the reference shape scaled by
    r_i = (delta_j * gamma_i / reference_capacity)^{1/(N-p+a)} and moved to
    the cell center, so by the scaling law its whole-space capacity is the
    target delta_j * gamma_i.  Cells with gamma = 0 carry the empty patch.
    """
    if reference_capacity <= 0:
        raise ValueError("reference capacity must be positive")
    eps = lattice.epsilon(j)
    delta = lattice.delta(j)
    q = lattice.cap_exponent
    ref_bound = lattice.reference_shape.bounding_radius()
    window = cells_inside(lattice.window, eps)
    if any(hi <= lo for lo, hi in window):
        raise ValueError("no lattice cell fits inside the window")
    ranges = [np.arange(lo, hi, dtype=np.int64) for lo, hi in window]
    mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1)
    idx_flat = mesh.reshape(-1, mesh.shape[-1])
    gammas = sample_at(process, idx_flat, omega).ravel()

    half_cube = 0.5 * lattice.M * eps ** lattice.beta
    patches = []
    for idx, g in zip(idx_flat, gammas):
        index = tuple(int(v) for v in idx)
        center = tuple(float(v) * eps for v in idx)
        target = delta * float(g)
        if target == 0.0:
            patches.append(ObstaclePatch(index, center, empty(),
                                         float(g), 0.0, 0.0))
            continue
        r = (target / reference_capacity) ** (1.0 / q)
        reach = r * ref_bound
        if reach > half_cube + 1e-12:
            raise SeparationError(
                f"patch at cell {index} has radius {reach:.6g} exceeding "
                f"half the separation cube {half_cube:.6g} "
                f"(level {j}, eps={eps:.6g})")
        if reach > eps / 2 + 1e-12:
            raise SeparationError(
                f"patch at cell {index} has radius {reach:.6g} overflowing "
                f"its lattice cell of side {eps:.6g} (level {j})")
        shape = lattice.reference_shape.scaled(r).translated(center)
        patches.append(ObstaclePatch(index, center, shape, float(g),
                                     target, r))
    return ObstacleConfig(j, eps, delta, tuple(patches))
