"""Obstacle geometry on and above the hyperplane {x_N = 0}.

Shapes are the compact sets whose capacities and constraint footprints the
rest of the package consumes: flat sets living in the hyperplane (intervals
for N=2, disks and boxes for N=3, finite unions of those) plus the solid
half-ball used as a volumetric test shape.  All of them are immutable and
support scaling about the origin and horizontal translation, which is
exactly the group of operations the capacity scaling law talks about.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import GridSpec

__all__ = [
    "ObstacleShape", "empty", "interval", "disk", "box", "ball", "union",
    "rasterize_bottom", "rasterize_nodes", "shape_to_dict", "shape_from_dict",
]

_FLAT_KINDS = ("interval", "disk", "box")
_KINDS = ("empty",) + _FLAT_KINDS + ("ball", "union")


@dataclass(frozen=True)
class ObstacleShape:
    """One obstacle set.

    kind        one of empty / interval / disk / box / ball / union
    center      horizontal center coordinates (length N-1)
    radius      half-width (interval), radius (disk, ball)
    half_widths box half-widths per horizontal axis
    parts       member shapes of a union
    """

    kind: str
    center: tuple[float, ...] = ()
    radius: float = 0.0
    half_widths: tuple[float, ...] = ()
    parts: tuple["ObstacleShape", ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind in ("interval", "disk", "box", "ball"):
            if self.kind == "box":
                if not self.half_widths or any(w <= 0 for w in self.half_widths):
                    raise ValueError("box needs positive half-widths")
                if len(self.center) != len(self.half_widths):
                    raise ValueError("box center/half_widths length mismatch")
            else:
                if self.radius <= 0:
                    raise ValueError(f"{self.kind} needs a positive radius")
            expected = {"interval": 1, "disk": 2, "box": len(self.half_widths),
                        "ball": len(self.center)}[self.kind]
            if len(self.center) != expected or not self.center:
                raise ValueError(f"{self.kind} center has wrong length")
        if self.kind == "union":
            if not self.parts:
                raise ValueError("union needs at least one part")
            dims = {s.horizontal_dimension for s in self.parts
                    if s.kind != "empty"}
            if len(dims) > 1:
                raise ValueError("union mixes horizontal dimensions")

    @property
    def horizontal_dimension(self) -> int | None:
        if self.kind == "empty":
            return None
        if self.kind == "union":
            for s in self.parts:
                d = s.horizontal_dimension
                if d is not None:
                    return d
            return None
        return len(self.center)

    @property
    def is_empty(self) -> bool:
        if self.kind == "empty":
            return True
        if self.kind == "union":
            return all(s.is_empty for s in self.parts)
        return False

    @property
    def is_volumetric(self) -> bool:
        if self.kind == "ball":
            return True
        if self.kind == "union":
            return any(s.is_volumetric for s in self.parts)
        return False

    def bounding_radius(self) -> float:
        """Radius of the smallest origin-centered ball containing the shape."""
        if self.kind == "empty":
            return 0.0
        if self.kind == "union":
            return max(s.bounding_radius() for s in self.parts)
        c = np.asarray(self.center)
        if self.kind == "interval":
            return float(abs(c[0]) + self.radius)
        if self.kind == "box":
            corner = np.abs(c) + np.asarray(self.half_widths)
            return float(np.linalg.norm(corner))
        # disk and ball: farthest point is along the center direction;
        # for the ball the vertical extent never exceeds that.
        return float(np.linalg.norm(c) + self.radius)

    def bounding_box(self) -> tuple[tuple[float, float], ...]:
        """Axis-aligned horizontal bounding intervals."""
        if self.kind == "empty":
            raise ValueError("empty shape has no bounding box")
        if self.kind == "union":
            boxes = [s.bounding_box() for s in self.parts if not s.is_empty]
            if not boxes:
                raise ValueError("union of empty shapes has no bounding box")
            return tuple(
                (min(b[k][0] for b in boxes), max(b[k][1] for b in boxes))
                for k in range(len(boxes[0])))
        if self.kind == "box":
            return tuple((c - w, c + w)
                         for c, w in zip(self.center, self.half_widths))
        return tuple((c - self.radius, c + self.radius)
                     for c in self.center)

    def min_feature(self) -> float:
        """Smallest half-width; detects shapes thinner than one grid cell."""
        if self.kind == "empty":
            return 0.0
        if self.kind == "union":
            vals = [s.min_feature() for s in self.parts if not s.is_empty]
            return min(vals) if vals else 0.0
        if self.kind == "box":
            return float(min(self.half_widths))
        return float(self.radius)

    def scaled(self, lam: float) -> "ObstacleShape":
        """Dilation x -> lam*x about the origin."""
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "empty":
            return self
        if self.kind == "union":
            return ObstacleShape("union", parts=tuple(s.scaled(lam)
                                                      for s in self.parts))
        return ObstacleShape(
            self.kind,
            center=tuple(lam * x for x in self.center),
            radius=lam * self.radius,
            half_widths=tuple(lam * w for w in self.half_widths),
        )

    def translated(self, offset) -> "ObstacleShape":
        """Horizontal translation; the weight never sees it."""
        off = tuple(float(x) for x in np.atleast_1d(offset))
        if self.kind == "empty":
            return self
        if self.kind == "union":
            return ObstacleShape("union", parts=tuple(s.translated(off)
                                                      for s in self.parts))
        if len(off) != len(self.center):
            raise ValueError("offset has wrong length")
        return ObstacleShape(
            self.kind,
            center=tuple(c + o for c, o in zip(self.center, off)),
            radius=self.radius,
            half_widths=self.half_widths,
        )

    def _leaves(self):
        if self.kind == "union":
            for s in self.parts:
                yield from s._leaves()
        elif self.kind != "empty":
            yield self


def empty() -> ObstacleShape:
    return ObstacleShape("empty")


def interval(center: float, half_width: float) -> ObstacleShape:
    return ObstacleShape("interval", center=(float(center),),
                         radius=float(half_width))


def disk(center, radius: float) -> ObstacleShape:
    cx, cy = (float(v) for v in center)
    return ObstacleShape("disk", center=(cx, cy), radius=float(radius))


def box(center, half_widths) -> ObstacleShape:
    c = tuple(float(v) for v in np.atleast_1d(center))
    w = tuple(float(v) for v in np.atleast_1d(half_widths))
    return ObstacleShape("box", center=c, half_widths=w)


def ball(center, radius: float) -> ObstacleShape:
    c = tuple(float(v) for v in np.atleast_1d(center))
    return ObstacleShape("ball", center=c, radius=float(radius))


def union(*parts: ObstacleShape) -> ObstacleShape:
    return ObstacleShape("union", parts=tuple(parts))


def _leaf_footprint(shape: ObstacleShape, haxes) -> np.ndarray:
    """Closed-set membership of bottom nodes for one non-union shape."""
    if shape.kind == "interval":
        (y,) = haxes
        return np.abs(y - shape.center[0]) <= shape.radius + 1e-12
    if shape.kind in ("disk", "ball"):
        grids = np.meshgrid(*haxes, indexing="ij")
        d2 = sum((g - c) ** 2 for g, c in zip(grids, shape.center))
        return d2 <= shape.radius ** 2 + 1e-12
    if shape.kind == "box":
        masks = [np.abs(ax - c) <= w + 1e-12
                 for ax, c, w in zip(haxes, shape.center, shape.half_widths)]
        out = masks[0]
        for m in masks[1:]:
            out = np.logical_and.outer(out, m)
        return out
    raise AssertionError(shape.kind)


def _nearest_node_mask(shape: ObstacleShape, haxes) -> np.ndarray:
    idx = tuple(int(np.argmin(np.abs(ax - c)))
                for ax, c in zip(haxes, shape.center))
    mask = np.zeros(tuple(len(ax) for ax in haxes), dtype=bool)
    mask[idx] = True
    return mask


def rasterize_bottom(shape: ObstacleShape, grid: GridSpec
                     ) -> tuple[np.ndarray, bool]:
    """Bottom-face node mask covered by the shape's footprint.

    A component thinner than one cell gets its nearest node and the result
    is flagged as inflated, since its capacity at this resolution is
    grid-dominated rather than shape-dominated.
    """
    if shape.horizontal_dimension not in (None, grid.dimension - 1):
        raise ValueError("shape and grid have different horizontal dimensions")
    haxes = [grid.axis(k) for k in range(grid.dimension - 1)]
    h = max(grid.spacings)
    mask = np.zeros(tuple(len(ax) for ax in haxes), dtype=bool)
    inflated = False
    for leaf in shape._leaves():
        m = _leaf_footprint(leaf, haxes)
        if not m.any():
            m = _nearest_node_mask(leaf, haxes)
            inflated = True
        elif leaf.min_feature() < 0.5 * h:
            inflated = True
        mask |= m
    return mask, inflated


def rasterize_nodes(shape: ObstacleShape, grid: GridSpec
                    ) -> tuple[np.ndarray, bool]:
    """Full-grid node mask: flat components on the bottom face, solid balls
    on every node they contain (upper half only, by construction)."""
    if shape.horizontal_dimension not in (None, grid.dimension - 1):
        raise ValueError("shape and grid have different horizontal dimensions")
    mask = np.zeros(grid.shape, dtype=bool)
    inflated = False
    haxes = [grid.axis(k) for k in range(grid.dimension - 1)]
    z = grid.axis(grid.dimension - 1)
    for leaf in shape._leaves():
        if leaf.kind == "ball":
            grids = np.meshgrid(*haxes, indexing="ij")
            d2 = sum((g - c) ** 2 for g, c in zip(grids, leaf.center))
            m = d2[..., None] + z[None, ...] ** 2 if grid.dimension == 2 \
                else d2[..., None] + z[None, None, :] ** 2
            m = m <= leaf.radius ** 2 + 1e-12
            if not m.any():
                m = np.zeros(grid.shape, dtype=bool)
                idx = tuple(int(np.argmin(np.abs(ax - c)))
                            for ax, c in zip(haxes, leaf.center)) + (0,)
                m[idx] = True
                inflated = True
            elif leaf.radius < 0.5 * max(grid.spacings):
                inflated = True
        else:
            fm, fl = rasterize_bottom(leaf, grid)
            inflated = inflated or fl
            m = np.zeros(grid.shape, dtype=bool)
            m[..., 0] = fm
        mask |= m
    return mask, inflated


def shape_to_dict(shape: ObstacleShape) -> dict:
    d: dict = {"kind": shape.kind}
    if shape.kind == "union":
        d["parts"] = [shape_to_dict(s) for s in shape.parts]
    elif shape.kind != "empty":
        d["center"] = list(shape.center)
        if shape.kind == "box":
            d["half_widths"] = list(shape.half_widths)
        else:
            d["radius"] = shape.radius
    return d


def shape_from_dict(d: dict) -> ObstacleShape:
    kind = d["kind"]
    if kind == "empty":
        return empty()
    if kind == "union":
        return union(*(shape_from_dict(s) for s in d["parts"]))
    if kind == "box":
        return box(d["center"], d["half_widths"])
    if kind not in ("interval", "disk", "ball"):
        raise ValueError(f"unknown shape kind {kind!r}")
    center = d["center"]
    if kind == "interval":
        return interval(center[0] if isinstance(center, (list, tuple))
                        else center, d["radius"])
    if kind == "disk":
        return disk(center, d["radius"])
    return ball(center, d["radius"])
