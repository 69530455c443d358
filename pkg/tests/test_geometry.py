"""Hull, fill, and stroke rasters against brute-force oracles."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldsmith import geometry

import oracles


def _hull_points(rng, n):
    return rng.uniform(0, 1000, size=(n, 2))


def test_single_point_hull():
    assert geometry.convex_hull([(3.0, 4.0)]) == [(3.0, 4.0)]


def test_duplicate_points_collapse():
    assert geometry.convex_hull([(1, 1), (1, 1), (1, 1)]) == [(1.0, 1.0)]


def test_collinear_points_make_segment():
    hull = geometry.convex_hull([(0, 0), (5, 5), (10, 10)])
    assert hull == [(0.0, 0.0), (10.0, 10.0)]


def test_interior_point_excluded():
    pts = [(0, 0), (10, 0), (10, 10), (0, 10), (5, 5)]
    hull = geometry.convex_hull(pts)
    assert hull == [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]


def test_collinear_edge_point_excluded():
    pts = [(0, 0), (10, 0), (10, 10), (0, 10), (5, 0)]
    hull = geometry.convex_hull(pts)
    assert (5.0, 0.0) not in hull


def test_hull_starts_at_lexicographic_minimum():
    hull = geometry.convex_hull([(9, 1), (2, 8), (2, 3), (7, 9)])
    assert hull[0] == (2.0, 3.0)


def test_hull_matches_brute_oracle_random():
    rng = np.random.default_rng(7)
    for _ in range(60):
        n = int(rng.integers(10, 120))
        pts = _hull_points(rng, n)
        ours = geometry.convex_hull(pts)
        ref = oracles.brute_hull(pts)
        assert ours == ref


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=-1e4, max_value=1e4),
            st.floats(min_value=-1e4, max_value=1e4),
        ),
        min_size=1,
        max_size=60,
    )
)
def test_hull_contains_all_points(points):
    hull = geometry.convex_hull(points)
    if len(hull) < 3:
        return
    # every input point sits on or left of every directed hull edge
    span = max(abs(v) for p in points for v in p) or 1.0
    tol = -1e-9 * span * span
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        for p in points:
            cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            assert cross >= tol


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=500),
            st.floats(min_value=0, max_value=500),
        ),
        min_size=3,
        max_size=40,
    )
)
def test_hull_is_idempotent(points):
    hull = geometry.convex_hull(points)
    assert geometry.convex_hull(hull) == hull


def test_fill_square_even_odd_bounds():
    # unit square of pixel centers: fill covers rows/cols 0..3, outline adds the rest
    verts = [(0.5, 0.5), (4.5, 0.5), (4.5, 4.5), (0.5, 4.5)]
    mask = geometry.fill_polygon(verts, 8, 8)
    assert mask[:4, :4].all()
    assert mask.sum() == 16


def test_polygon_region_mask_includes_boundary():
    verts = [(0.5, 0.5), (4.5, 0.5), (4.5, 4.5), (0.5, 4.5)]
    mask = geometry.polygon_region_mask(verts, 8, 8)
    assert mask[:5, :5].all()
    assert mask.sum() == 25


def test_fill_degenerate_polygon_is_empty():
    assert geometry.fill_polygon([(1.5, 1.5), (4.5, 4.5)], 8, 8).sum() == 0


def test_fill_matches_raycast_oracle_random():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        verts = [tuple(v) for v in rng.uniform(0, 32, size=(n, 2))]
        ours = geometry.fill_polygon(verts, 32, 32)
        ref = np.zeros((32, 32), dtype=bool)
        for y in range(32):
            for x in range(32):
                ref[y, x] = oracles.raycast_inside(verts, x + 0.5, y + 0.5)
        assert np.array_equal(ours, ref)


def test_region_mask_matches_oracle_random():
    rng = np.random.default_rng(13)
    for _ in range(10):
        n = int(rng.integers(3, 8))
        verts = [tuple(v) for v in rng.uniform(0, 32, size=(n, 2))]
        ours = geometry.polygon_region_mask(verts, 32, 32)
        ref = oracles.polygon_raster_oracle(verts, 32, 32)
        assert np.array_equal(ours, ref)


def test_bowtie_is_even_odd():
    verts = [(0.5, 0.5), (7.5, 7.5), (7.5, 0.5), (0.5, 7.5)]
    ours = geometry.fill_polygon(verts, 8, 8)
    ref = np.zeros((8, 8), dtype=bool)
    for y in range(8):
        for x in range(8):
            ref[y, x] = oracles.raycast_inside(verts, x + 0.5, y + 0.5)
    assert np.array_equal(ours, ref)
    # the crossing point region is excluded where winding cancels
    assert not ours[3:5, 3:5].any() or ours.sum() < 64


def test_stroke_single_point_width_one():
    mask = geometry.stroke_mask([(3.5, 4.5)], 1.0, 8, 8)
    assert mask.sum() == 1
    assert mask[4, 3]


def test_stroke_straight_line():
    mask = geometry.stroke_mask([(1.5, 2.5), (6.5, 2.5)], 1.0, 8, 8)
    assert mask.sum() == 6
    assert mask[2, 1:7].all()


def test_stroke_matches_distance_oracle():
    rng = np.random.default_rng(17)
    for _ in range(8):
        pts = [tuple(v) for v in rng.uniform(2, 30, size=(4, 2))]
        width = float(rng.integers(1, 7))
        ours = geometry.stroke_mask(pts, width, 32, 32)
        ref = oracles.stroke_raster_oracle(pts, width, 32, 32)
        assert np.array_equal(ours, ref)


def test_snap_center_clamps_to_canvas():
    assert geometry.snap_center((-3.0, 2.2), 8, 8) == (0.5, 2.5)
    assert geometry.snap_center((9.7, 100.0), 8, 8) == (7.5, 7.5)


def test_stroke_rejects_nonpositive_width():
    with pytest.raises(ValueError):
        geometry.stroke_mask([(1.5, 1.5)], 0.0, 8, 8)
