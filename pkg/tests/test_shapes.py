"""Obstacle shape algebra and rasterization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinlab import GridSpec
from thinlab.shapes import (
    ObstacleShape,
    ball,
    box,
    disk,
    empty,
    interval,
    rasterize_bottom,
    rasterize_nodes,
    shape_from_dict,
    shape_to_dict,
    union,
)


def grid3(n=9, nz=5, extent=2.0, origin=-1.0):
    return GridSpec(dimension=3, extent=(extent, extent), height=1.0,
                    shape=(n, n, nz), weight_exponent=0.0,
                    energy_exponent=2.0, origin=(origin, origin))


class TestConstructors:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            ObstacleShape("blob")
        with pytest.raises(ValueError):
            interval(0.0, -1.0)
        with pytest.raises(ValueError):
            union()

    def test_center_lengths(self):
        assert interval(0.3, 0.1).horizontal_dimension == 1
        assert disk((0, 0), 1.0).horizontal_dimension == 2
        assert ball((0, 0), 1.0).horizontal_dimension == 2
        with pytest.raises(ValueError):
            disk((0,), 1.0)

    def test_union_mixing_dimensions_rejected(self):
        with pytest.raises(ValueError):
            union(interval(0, 1), disk((0, 0), 1))

    def test_empty_flags(self):
        assert empty().is_empty
        assert union(empty(), empty()).is_empty
        assert not union(empty(), interval(0, 1)).is_empty

    def test_volumetric_flag(self):
        assert ball((0, 0), 1.0).is_volumetric
        assert not disk((0, 0), 1.0).is_volumetric
        assert union(disk((0, 0), 1.0), ball((2, 0), 0.5)).is_volumetric


class TestGeometry:
    def test_bounding_radius(self):
        assert interval(0.5, 0.25).bounding_radius() == 0.75
        assert np.isclose(box((1.0, 0.0), (0.5, 0.5)).bounding_radius(),
                          np.hypot(1.5, 0.5))
        assert disk((3.0, 4.0), 1.0).bounding_radius() == 6.0
        assert union(interval(0, 1), interval(4, 1)).bounding_radius() == 5.0

    @given(lam=st.floats(0.1, 10), r=st.floats(0.1, 2))
    @settings(max_examples=30, deadline=None)
    def test_scaling_scales_bounding_radius(self, lam, r):
        s = disk((0.5, -0.25), r)
        assert np.isclose(s.scaled(lam).bounding_radius(),
                          lam * s.bounding_radius())

    def test_scaled_moves_center_too(self):
        s = interval(2.0, 0.5).scaled(3.0)
        assert s.center == (6.0,)
        assert s.radius == 1.5

    def test_translation(self):
        s = ball((1.0, 2.0), 0.5).translated((-1.0, -2.0))
        assert s.center == (0.0, 0.0)
        assert s.bounding_radius() == 0.5


class TestRasterize:
    def test_disk_footprint_on_bottom(self):
        g = grid3(n=9)
        mask, inflated = rasterize_bottom(disk((0.0, 0.0), 0.5), g)
        assert not inflated
        ys = g.axis(0)
        inside = (ys[:, None] ** 2 + ys[None, :] ** 2) <= 0.25 + 1e-12
        assert np.array_equal(mask, inside)

    def test_flat_shape_occupies_only_bottom_plane(self):
        g = grid3()
        mask, _ = rasterize_nodes(disk((0.0, 0.0), 0.5), g)
        assert mask[..., 0].any()
        assert not mask[..., 1:].any()

    def test_ball_fills_upper_half(self):
        g = grid3()
        mask, _ = rasterize_nodes(ball((0.0, 0.0), 0.6), g)
        assert mask[..., 0].any()
        assert mask[..., 1].any()  # z = 0.25 < 0.6 is inside
        assert not mask[..., -1].any()

    def test_tiny_shape_inflates_to_nearest_node(self):
        g = grid3(n=5)  # h = 0.5, shape far smaller than a cell
        mask, inflated = rasterize_bottom(disk((0.1, 0.1), 0.01), g)
        assert inflated
        assert mask.sum() == 1

    def test_empty_shape_rasterizes_empty(self):
        g = grid3()
        mask, inflated = rasterize_bottom(empty(), g)
        assert not mask.any() and not inflated

    def test_dimension_mismatch_rejected(self):
        g = grid3()
        with pytest.raises(ValueError):
            rasterize_bottom(interval(0.0, 0.5), g)


class TestSerialization:
    @pytest.mark.parametrize("shape", [
        empty(),
        interval(0.25, 0.5),
        disk((0.0, 1.0), 0.75),
        box((0.5, 0.5), (0.25, 0.125)),
        ball((0.0, 0.0), 1.0),
        union(disk((0, 0), 0.5), ball((2, 2), 0.25)),
    ])
    def test_dict_round_trip(self, shape):
        assert shape_from_dict(shape_to_dict(shape)) == shape

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            shape_from_dict({"kind": "wedge"})
